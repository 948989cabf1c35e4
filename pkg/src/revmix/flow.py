"""Adaptive integration of the vortex flow with dense output and section events.

The stepper is the embedded Dormand-Prince 5(4) pair in ``_kernels`` with PI
step-size control.  Backward ranges (t1 < t0) integrate the negated field;
the reversing-symmetry route is deliberately left to the tests as an
independent identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import (
    EscapeError,
    NoCrossingInTrajectory,
    SingularityGuard,
    StepBudgetExceeded,
    WrongDirection,
)
from .systems import FlowState, VortexParams

TWO_PI = _kernels.TWO_PI


@dataclass(frozen=True)
class IntegratorConfig:
    """Tolerances and budgets for the embedded 5(4) stepper.

    Defaults are tight enough that R is conserved to ~1e-9 over a thousand
    unperturbed returns; geometry-only work (manifold growth) may hand in a
    looser config.
    """

    abs_tol: float = 1e-12
    rel_tol: float = 1e-12
    h_init: float = 1e-2
    h_max: float = 1.0
    max_steps: int = 100_000
    r_min: float = 1e-3
    r_max: float = 1e6

    def __post_init__(self):
        if self.abs_tol <= 0.0 or self.rel_tol <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")
        if self.h_init <= 0.0 or self.h_max <= 0.0:
            raise ValueError("step sizes must be positive")

    def tightened(self, factor: float = 10.0) -> "IntegratorConfig":
        """Same config with tolerances divided by ``factor`` (for cross-checks)."""
        return IntegratorConfig(
            abs_tol=self.abs_tol / factor,
            rel_tol=self.rel_tol / factor,
            h_init=self.h_init,
            h_max=self.h_max,
            max_steps=self.max_steps,
            r_min=self.r_min,
            r_max=self.r_max,
        )


_STATUS_ERRORS = {
    _kernels.SINGULAR: SingularityGuard,
    _kernels.STEP_BUDGET: StepBudgetExceeded,
    _kernels.ESCAPE: EscapeError,
}


def raise_for_status(status: int, context: str) -> None:
    if status == _kernels.OK:
        return
    exc = _STATUS_ERRORS.get(status, RuntimeError)
    raise exc(context)


class Trajectory:
    """Integration result: node states plus per-step dense-output stages.

    Node times are actual times (strictly increasing forward, strictly
    decreasing backward); internally the raw state carries the unwrapped S
    and phi lifts so interpolation never sees an angle seam.
    """

    def __init__(self, t0: float, direction: int, s_nodes, y_nodes, k_stages, params: VortexParams):
        self._t0 = float(t0)
        self._dir = int(direction)
        self._s = np.asarray(s_nodes, dtype=float)          # elapsed, >= 0, increasing
        self._y = np.asarray(y_nodes, dtype=float)          # raw (R, S, phi) at nodes
        self._k = np.asarray(k_stages, dtype=float)         # (n_steps, 7, 3)
        self.params = params

    @property
    def t(self) -> np.ndarray:
        """Node times."""
        return self._t0 + self._dir * self._s

    @property
    def n_steps(self) -> int:
        return len(self._s) - 1

    @property
    def t_start(self) -> float:
        return self._t0

    @property
    def t_end(self) -> float:
        return float(self._t0 + self._dir * self._s[-1])

    def raw_at(self, t: float) -> np.ndarray:
        """Dense evaluation of the raw (R, S, phi) state at time t."""
        s = (t - self._t0) * self._dir
        if s < -1e-12 or s > self._s[-1] + 1e-12:
            raise ValueError(f"t = {t} outside trajectory range")
        if len(self._s) == 1:
            return self._y[0].copy()
        i = int(np.searchsorted(self._s, s, side="right") - 1)
        i = min(max(i, 0), len(self._s) - 2)
        h = self._s[i + 1] - self._s[i]
        theta = 0.0 if h == 0.0 else (s - self._s[i]) / h
        out = np.empty(3)
        _kernels.dense_eval(self._y[i], self._k[i], h, theta, out)
        return out

    def state_at(self, t: float) -> FlowState:
        r, s, phi = self.raw_at(t)
        return FlowState(R=r, S=s, phi=phi)

    def phi_lift_at(self, t: float) -> float:
        return float(self.raw_at(t)[2])

    def nodes(self):
        """(t, FlowState) at every accepted step."""
        ts = self.t
        return [(float(ts[i]), FlowState(*self._y[i])) for i in range(len(ts))]

    def _segment(self, i: int):
        """Raw pieces of step i for event refinement."""
        h = self._s[i + 1] - self._s[i]
        return self._y[i], self._k[i], h


def integrate(
    x0: FlowState, t_span: tuple[float, float], p: VortexParams, cfg: IntegratorConfig
) -> Trajectory:
    """Integrate the flow over t_span; t1 < t0 runs backward (negated field)."""
    t0, t1 = float(t_span[0]), float(t_span[1])
    if t1 == t0:
        return Trajectory(t0, 1, np.array([0.0]), x0.as_array()[None, :], np.empty((0, 7, 3)), p)
    direction = 1 if t1 > t0 else -1
    duration = abs(t1 - t0)

    cap = cfg.max_steps
    ts = np.empty(cap + 1)
    ys = np.empty((cap + 1, 3))
    ks = np.empty((cap, 7, 3))
    yout = np.empty(3)
    status, m, _ = _kernels.integrate_dense(
        x0.as_array(), duration, float(direction), p.A, p.kappa, p.eps,
        cfg.rel_tol, cfg.abs_tol, cfg.h_init, cfg.h_max, cfg.max_steps,
        cfg.r_min, cfg.r_max, ts, ys, ks, yout,
    )
    raise_for_status(status, f"integrating over {t_span} from {x0}")
    return Trajectory(t0, direction, ts[: m + 1].copy(), ys[: m + 1].copy(), ks[:m].copy(), p)


def find_section_crossing(traj: Trajectory, target_phi_lift: float) -> tuple[float, FlowState]:
    """First crossing of phi_lift = target inside the trajectory.

    The crossing is refined on the dense output to |phi - target| < 1e-12
    and must have positive angular speed (WrongDirection otherwise).
    """
    p = traj.params
    phi = traj._y[:, 2]
    g = phi - target_phi_lift
    for i in range(traj.n_steps):
        if g[i] == 0.0 or (g[i] > 0.0) != (g[i + 1] > 0.0) or g[i + 1] == 0.0:
            y0, k, h = traj._segment(i)
            theta = _kernels.refine_crossing(y0, k, h, target_phi_lift, 2)
            out = np.empty(3)
            _kernels.dense_eval(y0, k, h, theta, out)
            out[2] = target_phi_lift
            s_cross = traj._s[i] + theta * h
            t_cross = traj._t0 + traj._dir * s_cross
            state = FlowState(R=out[0], S=out[1], phi=out[2])
            _, _, dphi = _kernels.field(out[0], out[1], out[2], p.A, p.kappa, p.eps)
            if dphi <= 0.0:
                raise WrongDirection(
                    f"crossing at t = {t_cross} has dphi/dt = {dphi} <= 0"
                )
            return float(t_cross), state
    raise NoCrossingInTrajectory(
        f"phi_lift never reaches {target_phi_lift} in [{traj.t_start}, {traj.t_end}]"
    )
