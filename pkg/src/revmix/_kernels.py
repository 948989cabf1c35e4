"""Compiled integration kernels for the two-vortex flow.

Everything here is numba-jitted and operates on plain floats/arrays so the
hot paths (tens of thousands of return-map evaluations, variational runs for
Jacobians, manifold regrowth inside bisection loops) stay cheap.  The Python
layer in ``flow``/``poincare`` wraps these kernels behind the public API and
translates status codes into exceptions.

The stepper is an embedded Dormand-Prince 5(4) pair with a PI step-size
controller and the standard quartic dense-output interpolant; section
crossings are located on the interpolant by safeguarded Newton iteration.
Backward-time integration is realized by integrating the negated field
(``sgn = -1``), never by the reversing symmetry, so symmetry identities stay
available as independent tests.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi

# status codes returned by the drivers
OK = 0
SINGULAR = 1
STEP_BUDGET = 2
NO_CROSSING = 3
ESCAPE = 4

# Dormand-Prince 5(4) tableau
_C2 = 1.0 / 5.0
_C3 = 3.0 / 10.0
_C4 = 4.0 / 5.0
_C5 = 8.0 / 9.0

_A21 = 1.0 / 5.0
_A31 = 3.0 / 40.0
_A32 = 9.0 / 40.0
_A41 = 44.0 / 45.0
_A42 = -56.0 / 15.0
_A43 = 32.0 / 9.0
_A51 = 19372.0 / 6561.0
_A52 = -25360.0 / 2187.0
_A53 = 64448.0 / 6561.0
_A54 = -212.0 / 729.0
_A61 = 9017.0 / 3168.0
_A62 = -355.0 / 33.0
_A63 = 46732.0 / 5247.0
_A64 = 49.0 / 176.0
_A65 = -5103.0 / 18656.0
# fifth-order weights (also the last stage row; FSAL)
_B1 = 35.0 / 384.0
_B3 = 500.0 / 1113.0
_B4 = 125.0 / 192.0
_B5 = -2187.0 / 6784.0
_B6 = 11.0 / 84.0
# error weights: fifth-order minus embedded fourth-order solution
_E1 = 71.0 / 57600.0
_E3 = -71.0 / 16695.0
_E4 = 71.0 / 1920.0
_E5 = -17253.0 / 339200.0
_E6 = 22.0 / 525.0
_E7 = -1.0 / 40.0

# quartic dense-output coefficients: y(t0+theta*h) = y0 + h * sum_s k_s * P_s(theta),
# P_s(theta) = sum_j P[s][j] * theta**(j+1)
_P = np.array(
    [
        [1.0, -8048581381.0 / 2820520608.0, 8663915743.0 / 2820520608.0, -12715105075.0 / 11282082432.0],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 131558114200.0 / 32700410799.0, -68118460800.0 / 10900136933.0, 87487479700.0 / 32700410799.0],
        [0.0, -1754552775.0 / 470086768.0, 14199869525.0 / 1410260304.0, -10690763975.0 / 1880347072.0],
        [0.0, 127303824393.0 / 49829197408.0, -318862633887.0 / 49829197408.0, 701980252875.0 / 199316789632.0],
        [0.0, -282668133.0 / 205662961.0, 2019193451.0 / 616988883.0, -1453857185.0 / 822651844.0],
        [0.0, 40617522.0 / 29380423.0, -110615467.0 / 29380423.0, 69997945.0 / 29380423.0],
    ]
)

# PI controller constants (Hairer-style for a 5th order pair); the safety
# factor is deliberately conservative so invariants hold well inside the
# nominal tolerance even on long runs with growing angle lifts
_SAFETY = 0.8
_ALPHA = 0.17
_BETA = 0.04
_FAC_MIN = 0.2
_FAC_MAX = 10.0


@njit(cache=True, nogil=True)
def field(R, S, phi, A, kappa, eps):
    """Right-hand side of the vortex flow, written term-for-term."""
    sphi = math.sin(phi)
    cphi = math.cos(phi)
    sS = math.sin(S)
    cS = math.cos(S)
    u = R * sphi
    su = math.sin(u)
    cu = math.cos(u)
    dR = 0.5 * A * R * math.sin(2.0 * phi) - eps * sphi * sS * su
    dS = -1.0 + eps * cS * cu
    dphi = kappa / (R * R) + A * cphi * cphi - (eps / R) * cphi * sS * su
    return dR, dS, dphi


@njit(cache=True, nogil=True)
def field_jacobian(R, S, phi, A, kappa, eps):
    """Closed-form partials of the field, row-major (dR,dS,dphi) x (R,S,phi)."""
    sphi = math.sin(phi)
    cphi = math.cos(phi)
    s2phi = math.sin(2.0 * phi)
    c2phi = math.cos(2.0 * phi)
    sS = math.sin(S)
    cS = math.cos(S)
    u = R * sphi
    su = math.sin(u)
    cu = math.cos(u)

    j00 = 0.5 * A * s2phi - eps * sphi * sphi * sS * cu
    j01 = -eps * sphi * cS * su
    j02 = A * R * c2phi - eps * sS * (cphi * su + sphi * cu * R * cphi)

    j10 = -eps * cS * su * sphi
    j11 = -eps * sS * cu
    j12 = -eps * cS * su * R * cphi

    j20 = (
        -2.0 * kappa / (R * R * R)
        + (eps / (R * R)) * cphi * sS * su
        - (eps / R) * cphi * sS * cu * sphi
    )
    j21 = -(eps / R) * cphi * cS * su
    j22 = -A * s2phi + (eps / R) * sphi * sS * su - eps * sS * cu * cphi * cphi
    return j00, j01, j02, j10, j11, j12, j20, j21, j22


@njit(cache=True, nogil=True)
def _rhs(mode, sgn, y, A, kappa, eps, out):
    """Field (mode 0) or field + variational flow of a 3x3 matrix (mode 1).

    Variational block: y[3 + 3*r + c] holds M[r][c], dM = J @ M.
    """
    dR, dS, dphi = field(y[0], y[1], y[2], A, kappa, eps)
    out[0] = sgn * dR
    out[1] = sgn * dS
    out[2] = sgn * dphi
    if mode == 1:
        j00, j01, j02, j10, j11, j12, j20, j21, j22 = field_jacobian(
            y[0], y[1], y[2], A, kappa, eps
        )
        for c in range(3):
            m0 = y[3 + c]
            m1 = y[6 + c]
            m2 = y[9 + c]
            out[3 + c] = sgn * (j00 * m0 + j01 * m1 + j02 * m2)
            out[6 + c] = sgn * (j10 * m0 + j11 * m1 + j12 * m2)
            out[9 + c] = sgn * (j20 * m0 + j21 * m1 + j22 * m2)


@njit(cache=True, nogil=True)
def dense_eval(y0, k, h, theta, out):
    """Evaluate the dense-output interpolant of one accepted step at theta in [0,1]."""
    n = y0.shape[0]
    t1 = theta
    t2 = t1 * theta
    t3 = t2 * theta
    t4 = t3 * theta
    for i in range(n):
        acc = 0.0
        for s in range(7):
            b = _P[s, 0] * t1 + _P[s, 1] * t2 + _P[s, 2] * t3 + _P[s, 3] * t4
            acc += k[s, i] * b
        out[i] = y0[i] + h * acc


@njit(cache=True, nogil=True)
def _dense_component(y0i, k, h, theta, i):
    t1 = theta
    t2 = t1 * theta
    t3 = t2 * theta
    t4 = t3 * theta
    acc = 0.0
    for s in range(7):
        b = _P[s, 0] * t1 + _P[s, 1] * t2 + _P[s, 2] * t3 + _P[s, 3] * t4
        acc += k[s, i] * b
    return y0i + h * acc


@njit(cache=True, nogil=True)
def _dense_component_deriv(k, h, theta, i):
    # d/dtheta of the interpolant component i
    t1 = 1.0
    t2 = 2.0 * theta
    t3 = 3.0 * theta * theta
    t4 = 4.0 * theta * theta * theta
    acc = 0.0
    for s in range(7):
        b = _P[s, 0] * t1 + _P[s, 1] * t2 + _P[s, 2] * t3 + _P[s, 3] * t4
        acc += k[s, i] * b
    return h * acc


@njit(cache=True, nogil=True)
def refine_crossing(y0, k, h, target, i):
    """Solve interpolant component i == target for theta in [0,1].

    Safeguarded Newton: keeps a bisection bracket and falls back to its
    midpoint whenever a Newton step leaves the bracket.  Stops when the
    residual is below 1e-12 (or the bracket collapses).
    """
    g_lo = y0[i] - target
    g_hi = _dense_component(y0[i], k, h, 1.0, i) - target
    lo = 0.0
    hi = 1.0
    if g_lo == 0.0:
        return 0.0
    if g_hi == 0.0:
        return 1.0
    theta = lo + (hi - lo) * g_lo / (g_lo - g_hi)
    for _ in range(100):
        g = _dense_component(y0[i], k, h, theta, i) - target
        if abs(g) < 1e-12:
            return theta
        if (g > 0.0) == (g_lo > 0.0):
            lo = theta
            g_lo = g
        else:
            hi = theta
            g_hi = g
        dg = _dense_component_deriv(k, h, theta, i)
        step_ok = False
        if dg != 0.0:
            cand = theta - g / dg
            if lo < cand < hi:
                theta = cand
                step_ok = True
        if not step_ok:
            theta = 0.5 * (lo + hi)
        if hi - lo < 1e-16:
            return theta
    return theta


@njit(cache=True, nogil=True)
def drive(
    mode,
    sgn,
    y0,
    t_cap,
    A,
    kappa,
    eps,
    rtol,
    atol,
    h_init,
    h_max,
    max_steps,
    r_min,
    r_max,
    phi_target,
    use_event,
    record,
    ts,
    ys,
    ks,
    yout,
):
    """Adaptive DP5(4) driver.

    Integrates dy/dt = sgn * f(y) from t=0 either to t_cap (use_event False)
    or until the phi component crosses phi_target (use_event True).  When
    ``record`` is set, node times/states and the per-step stage derivatives
    are written to ts/ys/ks for later dense evaluation.

    Returns (status, accepted_steps, t_end); the final (or event) state is
    written into ``yout``.
    """
    n = y0.shape[0]
    y = y0.copy()
    y_new = np.empty(n)
    y_stage = np.empty(n)
    k = np.empty((7, n))
    t = 0.0

    _rhs(mode, sgn, y, A, kappa, eps, k[0])
    if record:
        ts[0] = 0.0
        for i in range(n):
            ys[0, i] = y[i]

    h = h_init
    if h <= 0.0:
        h = 1e-4
    if h > h_max:
        h = h_max
    err_prev = 1.0
    rejected = False
    m = 0
    n_attempts = 0

    while True:
        if not use_event and t >= t_cap:
            for i in range(n):
                yout[i] = y[i]
            return OK, m, t
        if n_attempts >= max_steps:
            for i in range(n):
                yout[i] = y[i]
            return STEP_BUDGET, m, t
        n_attempts += 1

        if h > h_max:
            h = h_max
        if not use_event and t + h > t_cap:
            h = t_cap - t
        if h < 1e-14:
            h = 1e-14

        # stage 2
        for i in range(n):
            y_stage[i] = y[i] + h * (_A21 * k[0, i])
        _rhs(mode, sgn, y_stage, A, kappa, eps, k[1])
        # stage 3
        for i in range(n):
            y_stage[i] = y[i] + h * (_A31 * k[0, i] + _A32 * k[1, i])
        _rhs(mode, sgn, y_stage, A, kappa, eps, k[2])
        # stage 4
        for i in range(n):
            y_stage[i] = y[i] + h * (_A41 * k[0, i] + _A42 * k[1, i] + _A43 * k[2, i])
        _rhs(mode, sgn, y_stage, A, kappa, eps, k[3])
        # stage 5
        for i in range(n):
            y_stage[i] = y[i] + h * (
                _A51 * k[0, i] + _A52 * k[1, i] + _A53 * k[2, i] + _A54 * k[3, i]
            )
        _rhs(mode, sgn, y_stage, A, kappa, eps, k[4])
        # stage 6
        for i in range(n):
            y_stage[i] = y[i] + h * (
                _A61 * k[0, i]
                + _A62 * k[1, i]
                + _A63 * k[2, i]
                + _A64 * k[3, i]
                + _A65 * k[4, i]
            )
        _rhs(mode, sgn, y_stage, A, kappa, eps, k[5])
        # fifth-order solution; its derivative is the FSAL stage
        for i in range(n):
            y_new[i] = y[i] + h * (
                _B1 * k[0, i]
                + _B3 * k[2, i]
                + _B4 * k[3, i]
                + _B5 * k[4, i]
                + _B6 * k[5, i]
            )
        _rhs(mode, sgn, y_new, A, kappa, eps, k[6])

        # error estimate; variational entries share a matrix-norm scale so a
        # single entry crossing zero cannot force absolute 1e-12 accuracy
        m_norm = 0.0
        if mode == 1:
            for i in range(3, n):
                ay = abs(y[i])
                ayn = abs(y_new[i])
                big = ay if ay > ayn else ayn
                if big > m_norm:
                    m_norm = big
        err = 0.0
        bad = False
        for i in range(n):
            e = h * (
                _E1 * k[0, i]
                + _E3 * k[2, i]
                + _E4 * k[3, i]
                + _E5 * k[4, i]
                + _E6 * k[5, i]
                + _E7 * k[6, i]
            )
            if i < 3:
                ay = abs(y[i])
                ayn = abs(y_new[i])
                sc = atol + rtol * (ay if ay > ayn else ayn)
            else:
                sc = atol + rtol * m_norm
            if not math.isfinite(y_new[i]) or not math.isfinite(e):
                bad = True
                break
            w = e / sc
            err += w * w
        err = math.sqrt(err / n) if not bad else 2.0

        if bad or err > 1.0:
            fac = _FAC_MIN
            if not bad and err > 0.0:
                fac = _SAFETY * err ** (-0.2)
                if fac < _FAC_MIN:
                    fac = _FAC_MIN
                if fac > 1.0:
                    fac = 1.0
            h *= fac
            rejected = True
            continue

        # accepted
        if record:
            if m + 1 >= ts.shape[0]:
                for i in range(n):
                    yout[i] = y[i]
                return STEP_BUDGET, m, t
            ts[m + 1] = t + h
            for i in range(n):
                ys[m + 1, i] = y_new[i]
            for s in range(7):
                for i in range(n):
                    ks[m, s, i] = k[s, i]

        if use_event:
            g0 = y[2] - phi_target
            g1 = y_new[2] - phi_target
            if g0 == 0.0 or (g0 > 0.0) != (g1 > 0.0) or g1 == 0.0:
                theta = refine_crossing(y, k, h, phi_target, 2)
                dense_eval(y, k, h, theta, yout)
                yout[2] = phi_target
                return OK, m + 1, t + theta * h

        # guards checked after the event so a crossing inside the step wins
        if y_new[0] <= r_min:
            for i in range(n):
                yout[i] = y_new[i]
            return SINGULAR, m + 1, t + h
        if y_new[0] >= r_max:
            for i in range(n):
                yout[i] = y_new[i]
            return ESCAPE, m + 1, t + h

        t += h
        for i in range(n):
            y[i] = y_new[i]
            k[0, i] = k[6, i]
        m += 1

        if err < 1e-300:
            fac = _FAC_MAX
        else:
            fac = _SAFETY * err ** (-_ALPHA) * err_prev ** _BETA
            if fac > _FAC_MAX:
                fac = _FAC_MAX
            if fac < _FAC_MIN:
                fac = _FAC_MIN
        if rejected and fac > 1.0:
            fac = 1.0
        rejected = False
        err_prev = err if err > 1e-300 else 1e-300
        h *= fac


@njit(cache=True, nogil=True)
def return_map(R, S, sgn, A, kappa, eps, rtol, atol, h_init, h_max, max_steps, r_min, r_max):
    """One full turn of the section map: phi-lift from 0 to sgn*2pi.

    Returns (status, R', S' mod 2pi, elapsed_time).
    """
    y0 = np.empty(3)
    y0[0] = R
    y0[1] = S
    y0[2] = 0.0
    yout = np.empty(3)
    dummy_t = np.empty(1)
    dummy_y = np.empty((1, 1))
    dummy_k = np.empty((1, 1, 1))
    status, _, t_end = drive(
        0, sgn, y0, 1e18, A, kappa, eps, rtol, atol, h_init, h_max, max_steps,
        r_min, r_max, sgn * TWO_PI, True, False, dummy_t, dummy_y, dummy_k, yout,
    )
    return status, yout[0], yout[1] % TWO_PI, t_end


@njit(cache=True, nogil=True)
def return_map_jac(R, S, sgn, A, kappa, eps, rtol, atol, h_init, h_max, max_steps, r_min, r_max):
    """One turn with the variational flow of the identity matrix.

    Returns (status, yout12, elapsed_time, g0, g1, g2) where yout12 holds the
    final state and monodromy (row-major) and g is the integrated field
    sgn*f at the final state.
    """
    y0 = np.zeros(12)
    y0[0] = R
    y0[1] = S
    y0[2] = 0.0
    y0[3] = 1.0
    y0[7] = 1.0
    y0[11] = 1.0
    yout = np.empty(12)
    dummy_t = np.empty(1)
    dummy_y = np.empty((1, 1))
    dummy_k = np.empty((1, 1, 1))
    status, _, t_end = drive(
        1, sgn, y0, 1e18, A, kappa, eps, rtol, atol, h_init, h_max, max_steps,
        r_min, r_max, sgn * TWO_PI, True, False, dummy_t, dummy_y, dummy_k, yout,
    )
    dR, dS, dphi = field(yout[0], yout[1], yout[2], A, kappa, eps)
    return status, yout, t_end, sgn * dR, sgn * dS, sgn * dphi


@njit(cache=True, nogil=True)
def iterate_returns(
    R, S, n_skip, n_keep, sgn, A, kappa, eps, rtol, atol, h_init, h_max,
    max_steps, r_min, r_max, out,
):
    """Iterate the section map, discarding n_skip returns then storing n_keep.

    Returns (status, kept, R_last, S_last).  On a map failure the samples
    collected so far stay in ``out`` and the failing status is returned.
    """
    kept = 0
    r = R
    s = S
    for it in range(n_skip + n_keep):
        status, r2, s2, _ = return_map(
            r, s, sgn, A, kappa, eps, rtol, atol, h_init, h_max, max_steps, r_min, r_max
        )
        if status != OK:
            return status, kept, r, s
        r = r2
        s = s2
        if it >= n_skip:
            out[kept, 0] = r
            out[kept, 1] = s
            kept += 1
    return OK, kept, r, s


@njit(cache=True, nogil=True)
def integrate_dense(
    y0, duration, sgn, A, kappa, eps, rtol, atol, h_init, h_max, max_steps,
    r_min, r_max, ts, ys, ks, yout,
):
    """Record a dense trajectory over elapsed time [0, duration]."""
    return drive(
        0, sgn, y0, duration, A, kappa, eps, rtol, atol, h_init, h_max, max_steps,
        r_min, r_max, 0.0, False, True, ts, ys, ks, yout,
    )
