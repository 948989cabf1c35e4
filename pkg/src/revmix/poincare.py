"""Return map of the vortex flow on the section phi = 0 (mod 2pi).

One "return" means the phi lift advances by exactly +2pi (the inverse map
runs the negated field to -2pi), which keeps the crossing count unambiguous.
The 2x2 map Jacobian comes from the 3x3 variational flow followed by the
standard section projection that removes the flow-direction component.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DirectionError
from .flow import IntegratorConfig, raise_for_status
from .systems import (
    VortexParams,
    angle_difference,
    involution_fixed_line_distance,
    reduce_angle,
)

TWO_PI = _kernels.TWO_PI


@dataclass(frozen=True)
class SectionPoint:
    """Point (R, S) on the section; S stored reduced to [0, 2pi)."""

    R: float
    S: float

    def __post_init__(self):
        if not self.R > 0.0:
            raise ValueError(f"R must be positive (got {self.R})")
        object.__setattr__(self, "S", reduce_angle(self.S))

    def as_array(self) -> np.ndarray:
        return np.array([self.R, self.S])


@dataclass(frozen=True)
class MapJacobian:
    """2x2 derivative of the section map with determinant and multiplier pair."""

    matrix: np.ndarray
    det: float
    multipliers: tuple[complex, complex]

    @staticmethod
    def from_matrix(m: np.ndarray) -> "MapJacobian":
        det = float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])
        tr = float(m[0, 0] + m[1, 1])
        disc = tr * tr / 4.0 - det
        if disc >= 0.0:
            r = math.sqrt(disc)
            lam = (tr / 2.0 - r, tr / 2.0 + r)
            mults = (complex(lam[0]), complex(lam[1]))
        else:
            r = math.sqrt(-disc)
            mults = (complex(tr / 2.0, -r), complex(tr / 2.0, r))
        return MapJacobian(matrix=m, det=det, multipliers=mults)


def _check_direction(x: SectionPoint, p: VortexParams) -> None:
    _, _, dphi = _kernels.field(x.R, x.S, 0.0, p.A, p.kappa, p.eps)
    if dphi <= 0.0:
        raise DirectionError(f"dphi/dt = {dphi} <= 0 at section start {x}")


def poincare_map(
    x: SectionPoint, p: VortexParams, cfg: IntegratorConfig
) -> tuple[SectionPoint, float]:
    """One forward turn; returns the new section point and the return time."""
    _check_direction(x, p)
    status, r, s, t = _kernels.return_map(
        x.R, x.S, 1.0, p.A, p.kappa, p.eps,
        cfg.rel_tol, cfg.abs_tol, cfg.h_init, cfg.h_max, cfg.max_steps,
        cfg.r_min, cfg.r_max,
    )
    raise_for_status(status, f"return map from {x}")
    return SectionPoint(R=r, S=s), float(t)


def inverse_poincare_map(
    x: SectionPoint, p: VortexParams, cfg: IntegratorConfig
) -> SectionPoint:
    """One backward turn (negated field, phi lift to -2pi)."""
    _check_direction(x, p)
    status, r, s, _ = _kernels.return_map(
        x.R, x.S, -1.0, p.A, p.kappa, p.eps,
        cfg.rel_tol, cfg.abs_tol, cfg.h_init, cfg.h_max, cfg.max_steps,
        cfg.r_min, cfg.r_max,
    )
    raise_for_status(status, f"inverse return map from {x}")
    return SectionPoint(R=r, S=s)


def _project_monodromy(y12: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Section projection of the 3x3 monodromy.

    With n the section normal (0,0,1) and g the integrated field at the
    return point, the crossing-time correction is DP = Pi (I - g n^T/(n.g)) M
    restricted to the (R, S) rows and columns; starting displacements lie in
    the section, so the phi column drops out.
    """
    M = y12[3:].reshape(3, 3)
    g_phi = g[2]
    if g_phi == 0.0:
        raise DirectionError("vanishing transversal speed at the return point")
    dp = np.empty((2, 2))
    for i in range(2):
        for j in range(2):
            dp[i, j] = M[i, j] - g[i] * M[2, j] / g_phi
    return dp


def poincare_jacobian(
    x: SectionPoint, p: VortexParams, cfg: IntegratorConfig, direction: int = 1
) -> MapJacobian:
    """Variational 2x2 Jacobian of the (forward or inverse) section map at x."""
    _check_direction(x, p)
    status, y12, _, g0, g1, g2 = _kernels.return_map_jac(
        x.R, x.S, float(direction), p.A, p.kappa, p.eps,
        cfg.rel_tol, cfg.abs_tol, cfg.h_init, cfg.h_max, cfg.max_steps,
        cfg.r_min, cfg.r_max,
    )
    raise_for_status(status, f"variational return map from {x}")
    dp = _project_monodromy(y12, np.array([g0, g1, g2]))
    return MapJacobian.from_matrix(dp)


def map_with_jacobian(
    x: SectionPoint, p: VortexParams, cfg: IntegratorConfig, direction: int = 1
) -> tuple[SectionPoint, float, MapJacobian]:
    """Return point, return time and Jacobian from a single variational run."""
    _check_direction(x, p)
    status, y12, t, g0, g1, g2 = _kernels.return_map_jac(
        x.R, x.S, float(direction), p.A, p.kappa, p.eps,
        cfg.rel_tol, cfg.abs_tol, cfg.h_init, cfg.h_max, cfg.max_steps,
        cfg.r_min, cfg.r_max,
    )
    raise_for_status(status, f"variational return map from {x}")
    dp = _project_monodromy(y12, np.array([g0, g1, g2]))
    return SectionPoint(R=y12[0], S=y12[1]), float(t), MapJacobian.from_matrix(dp)


def induced_involution(x: SectionPoint) -> SectionPoint:
    """(R, S) -> (R, 2pi - S); fixed set is exactly {S = 0} u {S = pi}."""
    return SectionPoint(R=x.R, S=TWO_PI - x.S)


class VortexSectionMap:
    """Planar-map interface of the section return map (see systems.PlanarMap).

    The inverse is backward integration, never the symmetry conjugacy
    h o P o h, so that identity stays available as an independent check.
    """

    periodic_coord = 1
    periodic_span = TWO_PI

    def __init__(self, params: VortexParams, cfg: IntegratorConfig):
        self.params = params
        self.cfg = cfg

    # -- planar map protocol ------------------------------------------------
    def step(self, pt):
        y, _ = poincare_map(SectionPoint(pt[0], pt[1]), self.params, self.cfg)
        return y.as_array()

    def inverse(self, pt):
        y = inverse_poincare_map(SectionPoint(pt[0], pt[1]), self.params, self.cfg)
        return y.as_array()

    def jacobian(self, pt):
        return poincare_jacobian(SectionPoint(pt[0], pt[1]), self.params, self.cfg).matrix

    def displacement(self, a, b):
        return np.array([b[0] - a[0], angle_difference(a[1], b[1])])

    def normalize(self, pt):
        return np.array([pt[0], reduce_angle(pt[1])])

    def lift_near(self, pt, ref):
        return np.array([pt[0], ref[1] + angle_difference(ref[1], pt[1])])

    def involution(self, pt):
        return np.array([pt[0], reduce_angle(TWO_PI - pt[1])])

    def fixed_line_distance(self, pt):
        return involution_fixed_line_distance(pt[1])

    # -- extras used by orbit/chaos helpers ---------------------------------
    def step_with_time(self, pt):
        y, t = poincare_map(SectionPoint(pt[0], pt[1]), self.params, self.cfg)
        return y.as_array(), t

    def step_with_jacobian(self, pt, direction: int = 1):
        y, t, jac = map_with_jacobian(
            SectionPoint(pt[0], pt[1]), self.params, self.cfg, direction
        )
        return y.as_array(), t, jac
