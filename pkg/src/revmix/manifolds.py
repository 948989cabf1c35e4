"""One-dimensional invariant manifolds of saddles, their crossings, and crises.

A branch is grown by iterating a fundamental segment along the relevant
eigenvector: each level maps the previous level's points once and inserts
midpoints *in preimage space* wherever image spacing or turning angle breaks
the refinement criteria.  Stable manifolds use the true inverse map (backward
integration for the vortex system); the symmetry conjugacy h o P o h stays an
independent cross-check in the tests.

Polylines store the angle coordinate as a continuous lift.  For intersection
tests they are cut into components at the S = 0/2pi seam so no segment ever
crosses the seam implicitly; breaks (escaped or clipped points) are NaN rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import BracketInvalid
from .flow import IntegratorConfig
from .orbits import FixedPointRecord, find_fixed_point
from .poincare import VortexSectionMap
from .systems import PlanarMap, VortexParams

TWO_PI = 2.0 * math.pi

DELTA0 = 1e-5
DMAX = 5e-3
ALPHA_MAX = 0.3
POINT_BUDGET = 200_000


def _as_map(system, cfg) -> PlanarMap:
    if isinstance(system, VortexParams):
        return VortexSectionMap(system, cfg if cfg is not None else IntegratorConfig())
    return system


@dataclass
class ManifoldPolyline:
    """Ordered polyline along one branch of W^s or W^u of a saddle.

    ``points`` rows are (x, lifted-angle) pairs; NaN rows mark breaks where a
    point escaped or was clipped.  ``arclength`` is cumulative over unbroken
    runs.  ``budget_exceeded`` flags truncation by the point or arclength
    budget (a valid result, not an error).
    """

    saddle: FixedPointRecord
    side: str                    # "stable" | "unstable"
    branch: int                  # +1 | -1
    points: np.ndarray
    arclength: np.ndarray
    budget_exceeded: bool = False
    periodic_coord: Optional[int] = None
    periodic_span: float = 0.0
    step_mul: int = 1

    @property
    def total_arclength(self) -> float:
        return float(self.arclength[-1]) if len(self.arclength) else 0.0

    def components(self) -> list[np.ndarray]:
        """Canonical-coordinate pieces, cut at breaks and at the angle seam."""
        comps: list[np.ndarray] = []
        run: list[np.ndarray] = []

        def flush():
            if len(run) >= 2:
                comps.append(np.array(run))
            run.clear()

        if self.periodic_coord is None:
            for p in self.points:
                if np.any(np.isnan(p)):
                    flush()
                else:
                    run.append(p)
            flush()
            return comps

        c = self.periodic_coord
        span = self.periodic_span
        prev = None
        for p in self.points:
            if np.any(np.isnan(p)):
                flush()
                prev = None
                continue
            q = p.copy()
            q[c] = q[c] % span
            if prev is not None:
                jump = q[c] - prev[c]
                if abs(jump) > span / 2.0:
                    # the lift crossed a seam between prev and q: cut exactly there
                    lift_prev = prev[c]
                    lift_q = lift_prev + (jump - math.copysign(span, jump))
                    seam = span if jump < 0.0 else 0.0
                    denom = lift_q - lift_prev
                    t = 0.5 if denom == 0.0 else (seam - lift_prev) / denom
                    t = min(max(t, 0.0), 1.0)
                    cross = prev + t * (np.array([p[0], lift_q]) - prev)
                    run.append(np.array([cross[0], seam]))
                    flush()
                    run.append(np.array([cross[0], span - seam]))
            run.append(q)
            prev = q
        flush()
        return comps


def _eigendirection(record: FixedPointRecord, side: str) -> tuple[np.ndarray, float]:
    w, v = np.linalg.eig(record.jacobian)
    if np.iscomplexobj(w) and np.any(np.abs(w.imag) > 1e-12):
        raise ValueError(f"saddle has complex multipliers {w}; no 1D manifolds")
    w = w.real
    order = np.argsort(np.abs(w))
    idx = order[-1] if side == "unstable" else order[0]
    lam = float(w[idx])
    if side == "unstable" and abs(lam) <= 1.0:
        raise ValueError(f"no unstable multiplier (|lambda| = {abs(lam):.4g})")
    if side == "stable" and abs(lam) >= 1.0:
        raise ValueError(f"no stable multiplier (|lambda| = {abs(lam):.4g})")
    vec = np.real(v[:, idx])
    vec = vec / np.linalg.norm(vec)
    return vec, lam


def grow_manifold(
    saddle: FixedPointRecord,
    side: str,
    branch: int,
    arclength_budget: float,
    system,
    cfg: Optional[IntegratorConfig] = None,
    *,
    delta0: float = DELTA0,
    dmax: float = DMAX,
    alpha_max: float = ALPHA_MAX,
    point_budget: int = POINT_BUDGET,
    clip_window: Optional[tuple[float, float, float, float]] = None,
    clip_margin: float = 0.25,
    levels_max: int = 400,
    n_seed: int = 12,
) -> ManifoldPolyline:
    """Grow one branch of a 1D invariant manifold of a saddle periodic point.

    side "unstable" iterates the map, "stable" the inverse map; a negative
    relevant multiplier doubles the stride so the branch does not alternate.
    ``clip_window`` is (x_lo, x_hi, angle_lo, angle_hi) in canonical
    coordinates; points beyond it (plus margin) stop being mapped and leave a
    break in the polyline.
    """
    if side not in ("stable", "unstable"):
        raise ValueError("side must be 'stable' or 'unstable'")
    if branch not in (1, -1):
        raise ValueError("branch must be +1 or -1")
    pmap = _as_map(system, cfg)
    vec, lam = _eigendirection(saddle, side)
    step_mul = 2 if lam < 0.0 else 1
    n_apply = saddle.period * step_mul

    def fmap(pt):
        q = pt
        for _ in range(n_apply):
            q = pmap.step(q) if side == "unstable" else pmap.inverse(q)
        return q

    window = None
    if clip_window is not None:
        x_lo, x_hi, a_lo, a_hi = clip_window
        mx = clip_margin * (x_hi - x_lo)
        ma = clip_margin * (a_hi - a_lo)
        window = (x_lo - mx, x_hi + mx, a_lo - ma, a_hi + ma)

    def outside(pt) -> bool:
        if window is None:
            return False
        q = pmap.normalize(pt)
        return not (window[0] <= q[0] <= window[1] and window[2] <= q[1] <= window[3])

    x0 = saddle.point.astype(float)
    p_seed = x0 + branch * delta0 * vec
    try:
        p_img = pmap.lift_near(fmap(p_seed), p_seed)
    except Exception as e:
        raise type(e)(f"cannot map the seed segment: {e}") from e

    # fundamental segment [p_seed, F(p_seed)] sampled linearly
    ts = np.linspace(0.0, 1.0, max(n_seed, 3))
    level_pts = [p_seed + t * (p_img - p_seed) for t in ts]

    pts: list[np.ndarray] = [x0, *level_pts]
    nan_row = np.array([np.nan, np.nan])
    arclen = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        arclen += float(np.linalg.norm(b - a))
    budget_hit = False

    prev_level = level_pts
    for _ in range(levels_max):
        if budget_hit or arclen >= arclength_budget or len(pts) >= point_budget:
            budget_hit = len(pts) >= point_budget or arclen >= arclength_budget
            break
        # map the previous level once, flagging failures/clips as breaks
        pre: list[Optional[np.ndarray]] = []
        img: list[Optional[np.ndarray]] = []
        ref = pts[-1]
        for q in prev_level:
            if outside(q):
                pre.append(None)
                img.append(None)
                continue
            try:
                im = pmap.lift_near(fmap(q), ref)
            except Exception:
                pre.append(None)
                img.append(None)
                continue
            pre.append(q)
            img.append(im)
            ref = im
        # refine gaps/corners by inserting preimage midpoints
        i = 0
        while i < len(img) - 1 and len(pts) + len(img) < point_budget:
            a, b = img[i], img[i + 1]
            if a is None or b is None:
                i += 1
                continue
            gap = float(np.linalg.norm(b - a))
            bad = gap > dmax
            if not bad and 0 < i and img[i - 1] is not None and gap > 1e-12:
                u = a - img[i - 1]
                v = b - a
                nu, nv = np.linalg.norm(u), np.linalg.norm(v)
                if nu > 0 and nv > 0:
                    cosang = float(np.dot(u, v) / (nu * nv))
                    bad = math.acos(min(1.0, max(-1.0, cosang))) > alpha_max
            if not bad:
                i += 1
                continue
            qa, qb = pre[i], pre[i + 1]
            if qa is None or qb is None or float(np.linalg.norm(qb - qa)) < 1e-13:
                i += 1
                continue
            qm = 0.5 * (qa + qb)
            try:
                im = pmap.lift_near(fmap(qm), a)
            except Exception:
                i += 1
                continue
            pre.insert(i + 1, qm)
            img.insert(i + 1, im)
        # append to the polyline
        last = pts[-1]
        broken = False
        new_level: list[np.ndarray] = []
        for q, im in zip(pre, img):
            if im is None:
                if not broken and len(pts) and not np.any(np.isnan(pts[-1])):
                    pts.append(nan_row.copy())
                broken = True
                continue
            if not broken and len(pts) and not np.any(np.isnan(pts[-1])):
                arclen += float(np.linalg.norm(im - pts[-1]))
            pts.append(im)
            new_level.append(im)
            broken = False
            if arclen >= arclength_budget or len(pts) >= point_budget:
                budget_hit = True
                break
            last = im
        prev_level = [q for q in new_level]
        if not prev_level:
            break

    arr = np.array(pts)
    cum = np.zeros(len(arr))
    run = 0.0
    for i in range(1, len(arr)):
        if np.any(np.isnan(arr[i])) or np.any(np.isnan(arr[i - 1])):
            cum[i] = run
            continue
        run += float(np.linalg.norm(arr[i] - arr[i - 1]))
        cum[i] = run
    return ManifoldPolyline(
        saddle=saddle,
        side=side,
        branch=branch,
        points=arr,
        arclength=cum,
        budget_exceeded=budget_hit,
        periodic_coord=getattr(pmap, "periodic_coord", None),
        periodic_span=getattr(pmap, "periodic_span", 0.0),
        step_mul=step_mul,
    )


@dataclass
class IntersectionSet:
    """Transversal polyline crossings plus flagged degenerate overlaps."""

    points: list[np.ndarray] = field(default_factory=list)
    seg_a: list[int] = field(default_factory=list)
    seg_b: list[int] = field(default_factory=list)
    angles: list[float] = field(default_factory=list)
    degenerate_overlaps: int = 0

    def __len__(self) -> int:
        return len(self.points)

    @property
    def empty(self) -> bool:
        return len(self.points) == 0 and self.degenerate_overlaps == 0


def _segments(obj) -> tuple[np.ndarray, np.ndarray]:
    """Stack component polylines into (start, end) segment arrays."""
    if isinstance(obj, ManifoldPolyline):
        comps = obj.components()
    elif isinstance(obj, np.ndarray):
        comps = [obj]
    else:
        comps = list(obj)
    starts, ends = [], []
    for c in comps:
        c = np.asarray(c, dtype=float)
        if len(c) >= 2:
            starts.append(c[:-1])
            ends.append(c[1:])
    if not starts:
        return np.empty((0, 2)), np.empty((0, 2))
    return np.vstack(starts), np.vstack(ends)


def _seg_intersection(p0, p1, q0, q1, tol=1e-12):
    """Exact segment crossing; returns (point, t, u) or 'overlap' or None."""
    r = p1 - p0
    s = q1 - q0
    denom = r[0] * s[1] - r[1] * s[0]
    qp = q0 - p0
    qpxr = qp[0] * r[1] - qp[1] * r[0]
    scale = max(1.0, np.abs(r).max(), np.abs(s).max())
    if abs(denom) < tol * scale * scale:
        if abs(qpxr) < tol * scale * scale:
            # collinear: overlapping?
            rr = float(np.dot(r, r))
            if rr == 0.0:
                return None
            t0 = float(np.dot(qp, r)) / rr
            t1 = t0 + float(np.dot(s, r)) / rr
            lo, hi = min(t0, t1), max(t0, t1)
            if hi >= 0.0 and lo <= 1.0:
                return "overlap"
        return None
    t = (qp[0] * s[1] - qp[1] * s[0]) / denom
    u = qpxr / denom
    if -tol <= t <= 1.0 + tol and -tol <= u <= 1.0 + tol:
        return p0 + t * r, float(t), float(u)
    return None


def find_intersections(a, b, *, dedupe_tol: float = 1e-9) -> IntersectionSet:
    """All pairwise segment crossings between two polylines.

    Bounding boxes are hashed on a uniform grid before the exact test;
    endpoint touches are deduplicated; collinear overlapping segments are
    counted as degenerate overlaps, not enumerated pointwise.
    """
    a0, a1 = _segments(a)
    b0, b1 = _segments(b)
    out = IntersectionSet()
    if len(a0) == 0 or len(b0) == 0:
        return out

    lengths = np.linalg.norm(a1 - a0, axis=1)
    cell = max(float(np.median(lengths)) * 2.0, 1e-9)
    grid: dict[tuple[int, int], list[int]] = {}
    lo_a = np.minimum(a0, a1)
    hi_a = np.maximum(a0, a1)
    for i in range(len(a0)):
        i0x, i0y = int(lo_a[i, 0] // cell), int(lo_a[i, 1] // cell)
        i1x, i1y = int(hi_a[i, 0] // cell), int(hi_a[i, 1] // cell)
        for ix in range(i0x, i1x + 1):
            for iy in range(i0y, i1y + 1):
                grid.setdefault((ix, iy), []).append(i)

    lo_b = np.minimum(b0, b1)
    hi_b = np.maximum(b0, b1)
    seen: list[np.ndarray] = []
    for j in range(len(b0)):
        j0x, j0y = int(lo_b[j, 0] // cell), int(lo_b[j, 1] // cell)
        j1x, j1y = int(hi_b[j, 0] // cell), int(hi_b[j, 1] // cell)
        cand: set[int] = set()
        for ix in range(j0x, j1x + 1):
            for iy in range(j0y, j1y + 1):
                cand.update(grid.get((ix, iy), ()))
        for i in cand:
            if (
                hi_a[i, 0] < lo_b[j, 0]
                or hi_b[j, 0] < lo_a[i, 0]
                or hi_a[i, 1] < lo_b[j, 1]
                or hi_b[j, 1] < lo_a[i, 1]
            ):
                continue
            hit = _seg_intersection(a0[i], a1[i], b0[j], b1[j])
            if hit is None:
                continue
            if hit == "overlap":
                out.degenerate_overlaps += 1
                continue
            pt, _, _ = hit
            if any(np.linalg.norm(pt - q) < dedupe_tol for q in seen):
                continue
            seen.append(pt)
            da = a1[i] - a0[i]
            db = b1[j] - b0[j]
            na, nb = np.linalg.norm(da), np.linalg.norm(db)
            ang = 0.0
            if na > 0 and nb > 0:
                c = abs(float(np.dot(da, db) / (na * nb)))
                ang = math.acos(min(1.0, c))
            out.points.append(pt)
            out.seg_a.append(i)
            out.seg_b.append(j)
            out.angles.append(ang)
    return out


def hausdorff_distance(p: np.ndarray, q: np.ndarray) -> float:
    """Symmetric Hausdorff distance between two point clouds."""
    from scipy.spatial import cKDTree

    tp = cKDTree(p)
    tq = cKDTree(q)
    d_pq = tq.query(p)[0].max()
    d_qp = tp.query(q)[0].max()
    return float(max(d_pq, d_qp))


@dataclass(frozen=True)
class CrisisPair:
    """The two manifolds whose first crossing marks the crisis."""

    saddle_a: FixedPointRecord
    side_a: str
    saddle_b: FixedPointRecord
    side_b: str
    label: str = ""


@dataclass(frozen=True)
class GrowthBudgets:
    arclength: float = 60.0
    point_budget: int = POINT_BUDGET
    dmax: float = DMAX
    alpha_max: float = ALPHA_MAX
    delta0: float = DELTA0
    clip_window: Optional[tuple[float, float, float, float]] = None
    clip_margin: float = 0.25


@dataclass
class CrisisResult:
    eps_star: float
    bracket: tuple[float, float]
    probes: list[tuple[float, bool]]
    non_monotone: bool = False
    message: str = ""


def _pair_intersects(
    pair: CrisisPair,
    eps: float,
    p_base: VortexParams,
    cfg: IntegratorConfig,
    budgets_a: GrowthBudgets,
    budgets_b: GrowthBudgets,
) -> bool:
    """Regrow both manifolds (both branches each) at eps and test for crossings."""
    p = p_base.with_eps(eps)
    rec_a = find_fixed_point(pair.saddle_a.point, pair.saddle_a.period, p, cfg)
    rec_b = find_fixed_point(pair.saddle_b.point, pair.saddle_b.period, p, cfg)
    manifolds_b = [
        grow_manifold(
            rec_b, pair.side_b, br, budgets_b.arclength, p, cfg,
            delta0=budgets_b.delta0, dmax=budgets_b.dmax, alpha_max=budgets_b.alpha_max,
            point_budget=budgets_b.point_budget, clip_window=budgets_b.clip_window,
            clip_margin=budgets_b.clip_margin,
        )
        for br in (1, -1)
    ]
    for br in (1, -1):
        ma = grow_manifold(
            rec_a, pair.side_a, br, budgets_a.arclength, p, cfg,
            delta0=budgets_a.delta0, dmax=budgets_a.dmax, alpha_max=budgets_a.alpha_max,
            point_budget=budgets_a.point_budget, clip_window=budgets_a.clip_window,
            clip_margin=budgets_a.clip_margin,
        )
        for mb in manifolds_b:
            if len(find_intersections(ma, mb)) > 0:
                return True
    return False


def detect_crisis(
    pair: CrisisPair,
    eps_bracket: tuple[float, float],
    p_base: VortexParams,
    cfg: Optional[IntegratorConfig] = None,
    *,
    budgets_a: GrowthBudgets = GrowthBudgets(),
    budgets_b: GrowthBudgets = GrowthBudgets(),
    width: float = 1e-5,
    pre_scan: int = 0,
) -> CrisisResult:
    """Bisect the first appearance of manifold intersections in eps.

    The predicate must be False at the low end and True at the high end
    (checked; BracketInvalid otherwise).  An optional uniform pre-scan
    narrows the bracket and reports non-monotone predicate flips instead of
    silently assuming monotonicity.
    """
    cfg = cfg if cfg is not None else IntegratorConfig()
    lo, hi = float(eps_bracket[0]), float(eps_bracket[1])
    if not lo < hi:
        raise BracketInvalid(f"bracket {eps_bracket} is not increasing")
    probes: list[tuple[float, bool]] = []

    def probe(e: float) -> bool:
        r = _pair_intersects(pair, e, p_base, cfg, budgets_a, budgets_b)
        probes.append((e, r))
        return r

    if probe(lo):
        raise BracketInvalid(f"intersections already present at eps = {lo}")
    if not probe(hi):
        raise BracketInvalid(f"no intersections at eps = {hi}")

    non_monotone = False
    if pre_scan > 0:
        es = np.linspace(lo, hi, pre_scan + 2)[1:-1]
        vals = [probe(float(e)) for e in es]
        seq = [False, *vals, True]
        flips = sum(1 for a, b in zip(seq[:-1], seq[1:]) if a != b)
        non_monotone = flips > 1
        # narrow to the first False->True flip
        all_e = [lo, *map(float, es), hi]
        for a, b, va, vb in zip(all_e[:-1], all_e[1:], seq[:-1], seq[1:]):
            if not va and vb:
                lo, hi = a, b
                break

    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if probe(mid):
            hi = mid
        else:
            lo = mid
    msg = "predicate flipped more than once in the pre-scan" if non_monotone else ""
    return CrisisResult(
        eps_star=0.5 * (lo + hi),
        bracket=(lo, hi),
        probes=probes,
        non_monotone=non_monotone,
        message=msg,
    )
