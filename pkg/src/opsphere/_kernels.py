"""Compiled inner loops for the dynamics engine.

Family codes follow ``Family.code``: 0 linear, 1 asym-linear, 2 sign,
3 asym-sign, 4 slerp.
"""

import math

import numpy as np
from numba import njit

STATUS_EXHAUSTED = 0
STATUS_POLARIZED = 1
STATUS_INACTIVE = 2
STATUS_DEGENERATE = -1

_SLERP_ANGLE_TOL = 1e-9
_DEGENERATE_NORM = 1e-9


@njit(cache=True, nogil=True)
def f_scalar(code, eta, eta_plus, eta_minus, threshold, a):
    if code == 0:
        return eta * a
    if code == 1:
        return eta_plus * a if a >= 0.0 else eta_minus * a
    if code == 2:
        return eta if a >= 0.0 else -eta
    if code == 3:
        return eta_plus if a >= threshold else -eta_minus
    theta = math.acos(min(1.0, max(-1.0, a)))
    if theta < _SLERP_ANGLE_TOL:
        return eta / (1.0 - eta)
    if math.pi - theta < _SLERP_ANGLE_TOL:
        return -eta / (1.0 - eta)
    a = min(1.0, max(-1.0, a))
    phi = eta * a * math.sqrt(1.0 - a * a)
    return math.sin(phi) / math.sin(theta - phi)


@njit(cache=True, nogil=True)
def step_inplace(U, C, i, j, code, eta, eta_plus, eta_minus, threshold, buf):
    """Agent j influences agent i. Returns False if the update vector vanished."""
    n, d = U.shape
    f = f_scalar(code, eta, eta_plus, eta_minus, threshold, C[i, j])
    norm2 = 0.0
    for k in range(d):
        w = U[i, k] + f * U[j, k]
        buf[k] = w
        norm2 += w * w
    norm = math.sqrt(norm2)
    if norm <= _DEGENERATE_NORM:
        return False
    for k in range(d):
        U[i, k] = buf[k] / norm
    for l in range(n):
        if l == i:
            continue
        s = 0.0
        for k in range(d):
            s += U[i, k] * U[l, k]
        if s > 1.0:
            s = 1.0
        elif s < -1.0:
            s = -1.0
        C[i, l] = s
        C[l, i] = s
    return True


@njit(cache=True, nogil=True)
def effective_angle_vec(u, v):
    """min(alpha, pi - alpha) computed from the vectors, accurate near 0 and pi/2."""
    s = 0.0
    t = 0.0
    for k in range(u.shape[0]):
        s += (u[k] - v[k]) ** 2
        t += (u[k] + v[k]) ** 2
    alpha = 2.0 * math.atan2(math.sqrt(s), math.sqrt(t))
    return min(alpha, math.pi - alpha)


@njit(cache=True, nogil=True)
def metrics(U, C):
    """(min |A_ij|, max min(|A_ij|, 1-|A_ij|), triangle potential or nan) over i < j."""
    n = C.shape[0]
    mn = 1.0
    act = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            x = abs(C[i, j])
            if x < mn:
                mn = x
            a = min(x, 1.0 - x)
            if a > act:
                act = a
    tri = np.nan
    if n == 3:
        tri = effective_angle_vec(U[0], U[1]) + effective_angle_vec(U[0], U[2]) + effective_angle_vec(U[1], U[2])
    return mn, act, tri


@njit(cache=True, nogil=True)
def apply_pairs(U, C, pi, pj, code, eta, eta_plus, eta_minus, threshold):
    """Fold steps over a pair sequence. Returns the number of steps applied."""
    buf = np.empty(U.shape[1])
    for s in range(pi.shape[0]):
        if not step_inplace(U, C, pi[s], pj[s], code, eta, eta_plus, eta_minus, threshold, buf):
            return s
    return pi.shape[0]


@njit(cache=True, nogil=True)
def run_block(
    U, C, pi, pj, t0, record_every,
    code, eta, eta_plus, eta_minus, threshold,
    polar_tol, inactive_eps,
    rec_t, rec_i, rec_j, rec_min, rec_act, rec_tri,
):
    """Apply a block of sampled pairs starting after step t0.

    Metrics are recorded (and stop rules checked) whenever the step counter is
    a multiple of ``record_every``. A negative tolerance disables that stop
    rule. Returns (steps applied in this block, records written, status).
    """
    buf = np.empty(U.shape[1])
    nrec = 0
    for s in range(pi.shape[0]):
        if not step_inplace(U, C, pi[s], pj[s], code, eta, eta_plus, eta_minus, threshold, buf):
            return s, nrec, STATUS_DEGENERATE
        t = t0 + s + 1
        if t % record_every == 0:
            mn, act, tri = metrics(U, C)
            rec_t[nrec] = t
            rec_i[nrec] = pi[s]
            rec_j[nrec] = pj[s]
            rec_min[nrec] = mn
            rec_act[nrec] = act
            rec_tri[nrec] = tri
            nrec += 1
            if polar_tol >= 0.0 and 1.0 - mn <= polar_tol:
                return s + 1, nrec, STATUS_POLARIZED
            if inactive_eps >= 0.0 and act <= inactive_eps:
                return s + 1, nrec, STATUS_INACTIVE
    return pi.shape[0], nrec, STATUS_EXHAUSTED


@njit(cache=True, nogil=True)
def drive_steps(U, C, code, eta, eta_plus, eta_minus, threshold, target_abs, gamma_target, cap):
    """Let agent 1 influence agent 0 until |A| >= target_abs and the effective angle <= gamma_target.

    Works on a two-agent state in place. Returns the number of steps, -1 if
    ``cap`` steps did not suffice, -2 if an update vector vanished.
    """
    buf = np.empty(U.shape[1])
    for s in range(cap + 1):
        if abs(C[0, 1]) >= target_abs and effective_angle_vec(U[0], U[1]) <= gamma_target:
            return s
        if s == cap:
            break
        if not step_inplace(U, C, 0, 1, code, eta, eta_plus, eta_minus, threshold, buf):
            return -2
    return -1
