"""Periodic points of planar maps: Newton solving, classification, continuation.

All routines work on any ``systems.PlanarMap`` (the vortex section map and
the quadratic-map oracle alike).  Vortex-specific entry points accept
``VortexParams`` + ``IntegratorConfig`` and wrap them in a section map.
Continuation walks the wave amplitude, watching the characteristic-polynomial
test functions det - tr + 1 and det + tr + 1 whose sign changes flag a real
multiplier crossing +1 or -1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import BranchLost, NewtonDiverged, SingularJacobian
from .flow import IntegratorConfig
from .poincare import MapJacobian, SectionPoint, VortexSectionMap
from .systems import PlanarMap, VortexParams, involution_fixed_line_distance

TWO_PI = 2.0 * math.pi

NEWTON_TOL = 1e-10
SYM_TOL = 1e-6
CLASS_TOL = 1e-4

SystemLike = Union[PlanarMap, VortexParams]


def _as_map(system: SystemLike, cfg: Optional[IntegratorConfig]) -> PlanarMap:
    if isinstance(system, VortexParams):
        return VortexSectionMap(system, cfg if cfg is not None else IntegratorConfig())
    return system


@dataclass(frozen=True)
class FixedPointRecord:
    """A converged period-n point with its linearization and classification."""

    point: np.ndarray
    period: int
    multipliers: tuple[complex, complex]
    det: float
    trace: float
    kind: str                      # elliptic | saddle | sink | source | unresolved
    symmetric: bool
    jacobian: np.ndarray           # DP^n at the point
    residual: float
    label: str = ""

    @property
    def section_point(self) -> SectionPoint:
        return SectionPoint(R=float(self.point[0]), S=float(self.point[1]))

    def relabelled(self, label: str) -> "FixedPointRecord":
        return replace(self, label=label)


@dataclass(frozen=True)
class BifurcationEvent:
    """A real multiplier of the parent crossed +1 or -1 at eps_star."""

    eps_star: float
    kind: str                      # pitchfork | period_doubling | multiplier_one | unresolved
    parent: FixedPointRecord
    offspring: tuple[FixedPointRecord, ...] = ()


@dataclass
class Branch:
    """Continuation output: one record per eps plus the detected events."""

    eps_values: list[float] = field(default_factory=list)
    records: list[FixedPointRecord] = field(default_factory=list)
    events: list[BifurcationEvent] = field(default_factory=list)
    lost: bool = False
    message: str = ""


@dataclass(frozen=True)
class CascadeResult:
    """Successive period-doubling amplitudes and their spacing ratios."""

    eps_events: tuple[float, ...]
    periods: tuple[int, ...]       # period of the doubling parent at each event
    ratios: tuple[float, ...]      # (e_k - e_{k-1}) / (e_{k+1} - e_k)


def classify_multipliers(multipliers, class_tol: float = CLASS_TOL) -> str:
    """Open-condition classification with an explicit unresolved band.

    Points whose multiplier moduli fall within ``class_tol`` of the unit
    circle are labelled unresolved rather than force-classified, so
    near-bifurcation ambiguity stays visible.
    """
    l1, l2 = multipliers
    if abs(l1.imag) > 0.0 or abs(l2.imag) > 0.0:
        mod = abs(l1)
        if abs(mod - 1.0) < class_tol:
            return "elliptic"
        return "sink" if mod < 1.0 else "source"
    a1, a2 = sorted((abs(l1), abs(l2)))
    if a2 < 1.0 - class_tol:
        return "sink"
    if a1 > 1.0 + class_tol:
        return "source"
    if a1 < 1.0 - class_tol and a2 > 1.0 + class_tol:
        return "saddle"
    return "unresolved"


def iterate_map(pmap: PlanarMap, x: np.ndarray, n: int) -> list[np.ndarray]:
    """Orbit [x, Px, ..., P^n x]."""
    pts = [np.asarray(x, dtype=float)]
    for _ in range(n):
        pts.append(pmap.step(pts[-1]))
    return pts


def orbit_with_jacobian(pmap: PlanarMap, x: np.ndarray, n: int):
    """Orbit points plus DP^n chained from per-return Jacobians.

    Chaining n one-return Jacobians (instead of one long variational run)
    keeps accumulated dense-output error per factor bounded.
    """
    pts = [np.asarray(x, dtype=float)]
    dp = np.eye(2)
    for _ in range(n):
        j = pmap.jacobian(pts[-1])
        dp = j @ dp
        pts.append(pmap.step(pts[-1]))
    return pts, dp


def _orbit_is_symmetric(pmap: PlanarMap, orbit: Sequence[np.ndarray], sym_tol: float) -> bool:
    if pmap.involution is None:
        return False
    pts = [pmap.normalize(p) for p in orbit[:-1]]
    line_dist = getattr(pmap, "fixed_line_distance", None)
    if line_dist is not None:
        if min(line_dist(p) for p in pts) >= sym_tol:
            return False
    for p in pts:
        hp = pmap.involution(p)
        d = min(float(np.hypot(*pmap.displacement(hp, q))) for q in pts)
        if d >= sym_tol:
            return False
    return True


def find_fixed_point(
    guess,
    period: int,
    system: SystemLike,
    cfg: Optional[IntegratorConfig] = None,
    *,
    newton_tol: float = NEWTON_TOL,
    sym_tol: float = SYM_TOL,
    class_tol: float = CLASS_TOL,
    max_iter: int = 40,
    max_halvings: int = 8,
    max_step: float = 0.5,
    label: str = "",
) -> FixedPointRecord:
    """Damped Newton on P^n(x) - x = 0 from a caller-supplied guess.

    Raises NewtonDiverged when the residual will not decrease (after up to
    ``max_halvings`` step halvings) and SingularJacobian when the linear
    system degenerates (e.g. on the unperturbed circles of periodic points).
    """
    pmap = _as_map(system, cfg)
    if hasattr(guess, "as_array"):
        x = guess.as_array()
    else:
        x = np.asarray(guess, dtype=float).copy()

    def residual(pt):
        q = pt
        for _ in range(period):
            q = pmap.step(q)
        return pmap.displacement(pt, q)

    g = residual(x)
    for _ in range(max_iter):
        gn = float(np.linalg.norm(g))
        if gn < newton_tol:
            break
        _, dp = orbit_with_jacobian(pmap, x, period)
        a = dp - np.eye(2)
        det_a = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
        if abs(det_a) < 1e-12:
            raise SingularJacobian(
                f"|det(DP^n - I)| = {abs(det_a):.2e} at {x} (period {period})"
            )
        dx = np.linalg.solve(a, -g)
        ndx = float(np.linalg.norm(dx))
        if ndx > max_step:
            dx *= max_step / ndx
        lam = 1.0
        for _ in range(max_halvings + 1):
            x_try = pmap.normalize(x + lam * dx)
            try:
                g_try = residual(x_try)
            except Exception:
                lam /= 2.0
                continue
            if float(np.linalg.norm(g_try)) < gn:
                break
            lam /= 2.0
        else:
            raise NewtonDiverged(
                f"residual stuck at {gn:.2e} near {x} (period {period})"
            )
        x, g = x_try, g_try
    else:
        raise NewtonDiverged(
            f"no convergence after {max_iter} iterations near {x} (period {period})"
        )

    orbit, dp = orbit_with_jacobian(pmap, x, period)
    jac = MapJacobian.from_matrix(dp)
    kind = classify_multipliers(jac.multipliers, class_tol)
    symmetric = _orbit_is_symmetric(pmap, orbit, sym_tol)
    return FixedPointRecord(
        point=x,
        period=period,
        multipliers=jac.multipliers,
        det=jac.det,
        trace=float(np.trace(dp)),
        kind=kind,
        symmetric=symmetric,
        jacobian=dp,
        residual=float(np.linalg.norm(g)),
        label=label,
    )


FamilyLike = Union[VortexParams, Callable[[float], PlanarMap]]


def _family_factory(system: FamilyLike, cfg: Optional[IntegratorConfig]):
    if isinstance(system, VortexParams):
        base_cfg = cfg if cfg is not None else IntegratorConfig()
        return lambda e: VortexSectionMap(system.with_eps(e), base_cfg)
    return system


def find_pitchfork_offspring(
    parent: FixedPointRecord,
    pmap: PlanarMap,
    *,
    radii: Sequence[float] = (1e-3, 3e-3, 1e-2, 3e-2),
    n_angles: int = 16,
    sym_tol: float = SYM_TOL,
) -> list[FixedPointRecord]:
    """Restart Newton on circles around a just-pitchforked symmetric point.

    Keeps distinct converged period-n points other than the parent; the
    asymmetric pair f^s, f^u shows up as two mutually h-mirror records.
    A single small radius proved fragile in practice, hence the escalation.
    """
    out: list[FixedPointRecord] = []
    px = parent.point
    for r in radii:
        for a in np.linspace(0.0, TWO_PI, n_angles, endpoint=False):
            seed = px + r * np.array([math.cos(a), math.sin(a)])
            try:
                rec = find_fixed_point(seed, parent.period, pmap, sym_tol=sym_tol)
            except Exception:
                continue
            if float(np.linalg.norm(pmap.displacement(rec.point, px))) < 10 * sym_tol:
                continue  # fell back onto the parent
            if any(
                float(np.linalg.norm(pmap.displacement(rec.point, o.point))) < 1e-6
                for o in out
            ):
                continue
            out.append(rec)
        if len(out) >= 2:
            break
    return out


def continue_in_parameter(
    fp: FixedPointRecord,
    eps_range: tuple[float, float],
    step: float,
    system: FamilyLike,
    cfg: Optional[IntegratorConfig] = None,
    *,
    refine_rel: float = 1e-3,
    locate_offspring: bool = True,
    max_step_halvings: int = 3,
) -> Branch:
    """Re-solve Newton along an eps walk, recording multiplier crossings.

    Each detected sign change of det -+ tr + 1 is refined by bisection to a
    width of ``step * refine_rel``.  A +1 crossing of a symmetric parent is a
    pitchfork (offspring searched just past the event when requested); -1
    crossings are period doublings.  Newton failures truncate the branch
    (``lost`` flag) after a few step halvings rather than raising.
    """
    make_map = _family_factory(system, cfg)
    eps_a, eps_b = float(eps_range[0]), float(eps_range[1])
    branch = Branch()

    def solve(eps, seed, **kw):
        return find_fixed_point(seed, fp.period, make_map(eps), **kw)

    try:
        current = solve(eps_a, fp.point)
    except (NewtonDiverged, SingularJacobian) as e:
        raise BranchLost(f"starting point invalid at eps = {eps_a}: {e}") from e
    branch.eps_values.append(eps_a)
    branch.records.append(current)
    if eps_a == eps_b:
        return branch

    direction = 1.0 if eps_b > eps_a else -1.0
    h = abs(step)
    eps = eps_a

    def tests(rec):
        return rec.det - rec.trace + 1.0, rec.det + rec.trace + 1.0

    g_plus, g_minus = tests(current)

    while (eps_b - eps) * direction > 1e-15:
        eps_next = eps + direction * min(h, abs(eps_b - eps))
        tried = h
        for _ in range(max_step_halvings + 1):
            try:
                nxt = solve(eps_next, current.point)
                break
            except (NewtonDiverged, SingularJacobian) as e:
                tried /= 2.0
                eps_next = eps + direction * min(tried, abs(eps_b - eps))
                err = e
        else:
            branch.lost = True
            branch.message = f"Newton failed near eps = {eps_next}: {err}"
            return branch

        gp, gm = tests(nxt)
        for g0, g1, which in ((g_plus, gp, "+1"), (g_minus, gm, "-1")):
            if g0 == 0.0 or (g0 > 0.0) == (g1 > 0.0):
                continue
            ev = _refine_event(
                solve, eps, eps_next, current, which, abs(eps_next - eps) * refine_rel
            )
            if ev is not None:
                if (
                    locate_offspring
                    and ev.kind == "pitchfork"
                ):
                    kids = find_pitchfork_offspring(
                        solve(eps_next, current.point), make_map(eps_next)
                    )
                    ev = BifurcationEvent(
                        eps_star=ev.eps_star, kind=ev.kind, parent=ev.parent,
                        offspring=tuple(kids),
                    )
                branch.events.append(ev)

        eps, current, g_plus, g_minus = eps_next, nxt, gp, gm
        branch.eps_values.append(eps)
        branch.records.append(current)
    return branch


def _refine_event(solve, eps_lo, eps_hi, rec_lo, which, width) -> Optional[BifurcationEvent]:
    """Bisect a multiplier crossing down to ``width`` in eps."""

    def g_of(rec):
        if which == "+1":
            return rec.det - rec.trace + 1.0
        return rec.det + rec.trace + 1.0

    a, b = eps_lo, eps_hi
    ra = rec_lo
    ga = g_of(ra)
    try:
        while abs(b - a) > width:
            m = 0.5 * (a + b)
            rm = solve(m, ra.point)
            gm = g_of(rm)
            if (gm > 0.0) == (ga > 0.0):
                a, ra, ga = m, rm, gm
            else:
                b = m
    except (NewtonDiverged, SingularJacobian):
        return BifurcationEvent(eps_star=0.5 * (a + b), kind="unresolved", parent=ra)
    eps_star = 0.5 * (a + b)
    if which == "-1":
        kind = "period_doubling"
    else:
        kind = "pitchfork" if ra.symmetric else "multiplier_one"
    return BifurcationEvent(eps_star=eps_star, kind=kind, parent=ra)


def detect_cascade(
    fp: FixedPointRecord,
    eps_range: tuple[float, float],
    system: FamilyLike,
    cfg: Optional[IntegratorConfig] = None,
    *,
    step: float = 5e-4,
    period_cap: int = 32,
    seed_radii: Sequence[float] = (1e-5, 1e-4, 1e-3, 1e-2),
) -> CascadeResult:
    """Follow successive period doublings at periods n, 2n, 4n, ...

    After each doubling the doubled orbit is picked up by Newton restarts
    along the eigenvector of the multiplier near -1, and continuation resumes
    at the doubled period.  Stops at the period cap, the range end, or when
    the doubled orbit cannot be found.
    """
    make_map = _family_factory(system, cfg)
    eps_a, eps_b = float(eps_range[0]), float(eps_range[1])
    events: list[float] = []
    periods: list[int] = []
    current = fp
    eps_cur = eps_a

    while current.period <= period_cap:
        branch = continue_in_parameter(
            current, (eps_cur, eps_b), step, make_map, locate_offspring=False
        )
        pd = next((e for e in branch.events if e.kind == "period_doubling"), None)
        if pd is None:
            break
        events.append(pd.eps_star)
        periods.append(current.period)

        eps_seed = min(pd.eps_star + 2.0 * step, eps_b)
        parent = pd.parent
        w, v = np.linalg.eig(parent.jacobian)
        idx = int(np.argmin(np.abs(w + 1.0)))
        direction = np.real(v[:, idx])
        nrm = np.linalg.norm(direction)
        direction = direction / nrm if nrm > 0 else np.array([1.0, 0.0])

        pmap = make_map(eps_seed)
        try:
            base = find_fixed_point(parent.point, parent.period, pmap)
        except (NewtonDiverged, SingularJacobian):
            break
        doubled = None
        for r in seed_radii:
            for sgn in (1.0, -1.0):
                try:
                    cand = find_fixed_point(
                        base.point + sgn * r * direction, 2 * parent.period, pmap
                    )
                except (NewtonDiverged, SingularJacobian):
                    continue
                sep = float(np.linalg.norm(pmap.displacement(cand.point, base.point)))
                if sep > 1e-7:
                    doubled = cand
                    break
            if doubled is not None:
                break
        if doubled is None:
            break
        current = doubled
        eps_cur = eps_seed

    ratios: list[float] = []
    for i in range(len(events) - 2):
        d0 = events[i + 1] - events[i]
        d1 = events[i + 2] - events[i + 1]
        if d1 != 0.0:
            ratios.append(d0 / d1)
    return CascadeResult(
        eps_events=tuple(events), periods=tuple(periods), ratios=tuple(ratios)
    )


def scan_symmetric_fixed_points(
    p: VortexParams,
    cfg: Optional[IntegratorConfig] = None,
    *,
    r_range: tuple[float, float] = (2.0, 12.0),
    n_grid: int = 500,
    lines: Sequence[float] = (0.0, math.pi),
    dr_tol: float = 0.05,
) -> list[FixedPointRecord]:
    """Symmetric period-1 points found by scanning the fixed lines of h.

    Walks R along S = 0 and S = pi, locates zeros of the wrapped S
    displacement of one return, filters out symmetric 2-cycles (nonzero R
    displacement at the zero), and polishes with the full 2D Newton.
    """
    cfg = cfg if cfg is not None else IntegratorConfig()
    pmap = VortexSectionMap(p, cfg)
    out: list[FixedPointRecord] = []

    def disp(R, S0):
        q = pmap.step(np.array([R, S0]))
        d = pmap.displacement(np.array([R, S0]), q)
        return d[1], d[0]

    for S0 in lines:
        rs = np.linspace(r_range[0], r_range[1], n_grid)
        ds = np.empty(n_grid)
        dr = np.empty(n_grid)
        ok = np.ones(n_grid, dtype=bool)
        for i, R in enumerate(rs):
            try:
                ds[i], dr[i] = disp(R, S0)
            except Exception:
                ok[i] = False
        for i in range(n_grid - 1):
            if not (ok[i] and ok[i + 1]):
                continue
            if (ds[i] > 0.0) == (ds[i + 1] > 0.0):
                continue
            if max(abs(ds[i]), abs(ds[i + 1])) > 1.0:
                continue  # wrap artifact near an anti-resonance
            a, b, fa = rs[i], rs[i + 1], ds[i]
            for _ in range(60):
                m = 0.5 * (a + b)
                try:
                    fm, _ = disp(m, S0)
                except Exception:
                    break
                if (fm > 0.0) == (fa > 0.0):
                    a, fa = m, fm
                else:
                    b = m
                if b - a < 1e-12:
                    break
            r_star = 0.5 * (a + b)
            try:
                _, dr_star = disp(r_star, S0)
            except Exception:
                continue
            if abs(dr_star) > dr_tol:
                continue  # symmetric 2-cycle, not a fixed point
            try:
                rec = find_fixed_point(np.array([r_star, S0]), 1, pmap)
            except (NewtonDiverged, SingularJacobian):
                continue
            if involution_fixed_line_distance(rec.point[1]) > 1e-6:
                continue
            if any(
                abs(rec.point[0] - o.point[0]) < 1e-6
                and involution_fixed_line_distance(rec.point[1] - o.point[1]) < 1e-6
                and abs(rec.point[1] - o.point[1]) < 1e-6
                for o in out
            ):
                continue
            out.append(rec)
    out.sort(key=lambda r: (r.point[0], r.point[1]))
    return out


def return_winding(rec: FixedPointRecord, p: VortexParams, cfg: Optional[IntegratorConfig] = None) -> int:
    """S-winding count of a period-1 point: its return time in units of 2pi."""
    cfg = cfg if cfg is not None else IntegratorConfig()
    pmap = VortexSectionMap(p, cfg)
    _, t = pmap.step_with_time(rec.point)
    return int(round(t / TWO_PI))
