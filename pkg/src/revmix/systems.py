"""The perturbed two-vortex field, its reversing symmetries, and planar-map oracles.

Coordinates: R is the vortex-pair separation scale, S a slow angular phase,
phi the fast rotation angle.  phi is kept as an unwrapped lift so "one full
turn" is unambiguous for the section map; S is always reported reduced to
[0, 2pi).  The field has the reversing symmetries

    H1: (R, S, phi, t) -> (R, -S, -phi, -t)
    H2: (R, S, phi, t) -> (R, 2pi - S, 2pi - phi, -t)

which induce S -> -S (resp. 2pi - S) on the section phi = 0 mod 2pi.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Protocol, runtime_checkable

import numpy as np

from . import _kernels
from .errors import DomainError

TWO_PI = 2.0 * math.pi

#: singularity guard: the kappa/R^2 term blows up at R = 0
R_MIN_DEFAULT = 1e-3


def reduce_angle(a: float) -> float:
    """Reduce an angle to [0, 2pi)."""
    r = math.fmod(a, TWO_PI)
    if r < 0.0:
        r += TWO_PI
    return 0.0 if r == TWO_PI else r


def angle_difference(a: float, b: float) -> float:
    """Signed minimal angular difference b - a, in [-pi, pi)."""
    d = math.fmod(b - a, TWO_PI)
    if d < -math.pi:
        d += TWO_PI
    elif d >= math.pi:
        d -= TWO_PI
    return d


@dataclass(frozen=True)
class VortexParams:
    """Physical parameters: shear vorticity A, vortex intensity sum kappa, wave amplitude eps."""

    A: float = 0.1
    kappa: float = 4.65
    eps: float = 0.0

    def __post_init__(self):
        if not self.kappa > 0.0:
            raise ValueError(f"kappa must be > 0 (got {self.kappa}); the section is only transversal then")
        if self.eps < 0.0:
            raise ValueError(f"eps must be >= 0 (got {self.eps})")

    def with_eps(self, eps: float) -> "VortexParams":
        return dataclasses.replace(self, eps=eps)


@dataclass(frozen=True)
class FlowState:
    """A point of the 3D flow.  phi is an unwrapped lift; S is stored mod 2pi."""

    R: float
    S: float
    phi: float

    def __post_init__(self):
        if not self.R > R_MIN_DEFAULT:
            raise DomainError(f"R = {self.R} is at or below the guard radius {R_MIN_DEFAULT}")
        object.__setattr__(self, "S", reduce_angle(self.S))

    @property
    def phi_mod(self) -> float:
        """phi reduced to [0, 2pi) for external reporting."""
        return reduce_angle(self.phi)

    def as_array(self) -> np.ndarray:
        return np.array([self.R, self.S, self.phi])


class Involution(Enum):
    """Reversing involutions of the flow (H1, H2) and of the section map (h1, h2)."""

    H1 = "H1"
    H2 = "H2"
    h1 = "h1"
    h2 = "h2"

    @property
    def is_flow(self) -> bool:
        return self in (Involution.H1, Involution.H2)


def apply_involution(inv: Involution, x):
    """Apply a reversing involution to a FlowState or a section point.

    Time reversal is the caller's business (realized by backward
    integration); only the coordinate part is applied here.  Double
    application is the identity up to angle reduction.
    """
    if hasattr(x, "phi"):
        if not inv.is_flow:
            raise ValueError(f"{inv.value} acts on section points, not flow states")
        if inv is Involution.H1:
            return dataclasses.replace(x, S=-x.S, phi=-x.phi)
        return dataclasses.replace(x, S=TWO_PI - x.S, phi=TWO_PI - x.phi)
    if inv.is_flow:
        raise ValueError(f"{inv.value} acts on flow states, not section points")
    if inv is Involution.h1:
        return dataclasses.replace(x, S=-x.S)
    return dataclasses.replace(x, S=TWO_PI - x.S)


def involution_fixed_line_distance(S: float) -> float:
    """Angular distance of phase S to the symmetry lines S = 0 and S = pi."""
    return min(abs(angle_difference(0.0, S)), abs(angle_difference(math.pi, S)))


def eval_field(state: FlowState, p: VortexParams, r_min: float = R_MIN_DEFAULT):
    """Field (dR/dt, dS/dt, dphi/dt) at a state; purely functional."""
    if state.R <= r_min:
        raise DomainError(f"R = {state.R} is at or below the guard radius {r_min}")
    return _kernels.field(state.R, state.S, state.phi, p.A, p.kappa, p.eps)


def eval_field_jacobian(state: FlowState, p: VortexParams, r_min: float = R_MIN_DEFAULT) -> np.ndarray:
    """Closed-form 3x3 matrix of partials of the field wrt (R, S, phi)."""
    if state.R <= r_min:
        raise DomainError(f"R = {state.R} is at or below the guard radius {r_min}")
    j = _kernels.field_jacobian(state.R, state.S, state.phi, p.A, p.kappa, p.eps)
    return np.array(j).reshape(3, 3)


def unperturbed_integral(state: FlowState, p: VortexParams) -> float:
    """Conserved quantity of the eps = 0 flow: 2*kappa*ln R + A R^2 cos^2 phi.

    Hard-coded as a test oracle for the integrable limit, not discovered.
    """
    return 2.0 * p.kappa * math.log(state.R) + p.A * state.R**2 * math.cos(state.phi) ** 2


# ---------------------------------------------------------------------------
# generic planar (section) maps
# ---------------------------------------------------------------------------


@runtime_checkable
class PlanarMap(Protocol):
    """What the fixed-point, continuation, manifold and chaos machinery needs.

    Points are length-2 float arrays.  ``displacement(a, b)`` is the minimal
    vector from a to b (wrapping-aware for cylindrical phase spaces),
    ``normalize`` reduces a point to canonical coordinates and ``lift_near``
    picks the representative of ``pt`` closest to ``ref``.  ``involution``
    is None for maps without a reversing symmetry.
    """

    involution: Optional[Callable[[np.ndarray], np.ndarray]]
    #: index of a periodic coordinate (None on the plane), and its period
    periodic_coord: Optional[int]
    periodic_span: float

    def step(self, pt: np.ndarray) -> np.ndarray: ...

    def inverse(self, pt: np.ndarray) -> np.ndarray: ...

    def jacobian(self, pt: np.ndarray) -> np.ndarray: ...

    def displacement(self, a: np.ndarray, b: np.ndarray) -> np.ndarray: ...

    def normalize(self, pt: np.ndarray) -> np.ndarray: ...

    def lift_near(self, pt: np.ndarray, ref: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class HenonParams:
    """Quadratic-map parameters; |b| < 1 keeps the map area-contracting."""

    M: float
    b: float

    def __post_init__(self):
        if not abs(self.b) < 1.0:
            raise ValueError(f"|b| must be < 1 (got {self.b})")


def henon_step(pt, p: HenonParams):
    """(x, y) -> (y, M - b*x - y^2)."""
    x, y = pt
    return np.array([y, p.M - p.b * x - y * y])


def henon_inverse(pt, p: HenonParams):
    x1, y1 = pt
    return np.array([(p.M - y1 - x1 * x1) / p.b, x1])


def henon_jacobian(pt, p: HenonParams) -> np.ndarray:
    """Jacobian [[0, 1], [-b, -2y]]; determinant is b at every point."""
    return np.array([[0.0, 1.0], [-p.b, -2.0 * pt[1]]])


def henon_fixed_points(p: HenonParams) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form fixed points x = y = (-(1+b) +- sqrt((1+b)^2 + 4M)) / 2."""
    disc = (1.0 + p.b) ** 2 + 4.0 * p.M
    if disc < 0.0:
        raise ValueError("no real fixed points for these parameters")
    r = math.sqrt(disc)
    xp = (-(1.0 + p.b) + r) / 2.0
    xm = (-(1.0 + p.b) - r) / 2.0
    return np.array([xp, xp]), np.array([xm, xm])


class HenonMap:
    """Planar-map wrapper used as a non-reversible oracle for the orbit and manifold machinery."""

    involution = None
    periodic_coord = None
    periodic_span = 0.0

    def __init__(self, params: HenonParams):
        self.params = params

    def step(self, pt):
        return henon_step(pt, self.params)

    def inverse(self, pt):
        return henon_inverse(pt, self.params)

    def jacobian(self, pt):
        return henon_jacobian(pt, self.params)

    def displacement(self, a, b):
        return np.asarray(b, dtype=float) - np.asarray(a, dtype=float)

    def normalize(self, pt):
        return np.asarray(pt, dtype=float)

    def lift_near(self, pt, ref):
        return np.asarray(pt, dtype=float)
