"""Inner loops compiled with numba when available.

Everything here takes and returns plain scalars and numpy arrays so the
same source runs under ``@njit`` and as ordinary Python.
"""
import math

import numpy as np

from ._accel import njit

# Termination codes returned by ``gillespie_chunk``.
BUFFER_EXHAUSTED = 0
EXTINCT = 1
HORIZON = 2
MAX_EVENTS = 3
INVALID_PROBS = 4

PROB_TOL = 1e-12


@njit(cache=True)
def q_value(a0, a1, a2, t, clip):
    p = a0 + a1 * t + a2 * t * t
    if p == 0.0:
        q = -np.inf
    else:
        q = 2.0 - 1.0 / p
    if clip:
        if q < 0.0 or q != q:
            q = 0.0
        elif q > 2.0:
            q = 2.0
    return q


@njit(cache=True)
def gillespie_chunk(t, S, D, F, n_events, horizon, max_events, r,
                    a0, a1, a2, k, s, clip, uniforms,
                    ev_t, ev_kind, ev_S, ev_D, ev_F):
    """Advance the division process until a stop condition or buffer end.

    Each event consumes two uniforms: one for the exponential waiting time
    at total rate ``r*S`` and one for the division kind. Events are written
    to the ``ev_*`` arrays. Returns the new state, the number of uniforms
    consumed, the number of events written and a termination code.
    """
    n_u = uniforms.shape[0]
    cap = ev_t.shape[0]
    i = 0
    m = 0
    status = BUFFER_EXHAUSTED
    while True:
        if S <= 0:
            status = EXTINCT
            break
        if n_events >= max_events:
            status = MAX_EVENTS
            break
        if i + 2 > n_u or m >= cap:
            status = BUFFER_EXHAUSTED
            break
        u = uniforms[i]
        i += 1
        t_next = t - math.log(1.0 - u) / (r * S)
        if t_next > horizon:
            t = horizon
            status = HORIZON
            break
        q = q_value(a0, a1, a2, t_next, clip)
        w = 2.0 - q
        p1 = w / k * (1.0 - s)
        p2 = w * (k - 2.0) / k
        p3 = (2.0 - k + (k - 1.0) * q) / k
        p4 = w / k * s
        if (not (q == q) or p1 < -PROB_TOL or p2 < -PROB_TOL
                or p3 < -PROB_TOL or p4 < -PROB_TOL):
            t = t_next
            status = INVALID_PROBS
            break
        v = uniforms[i]
        i += 1
        c1 = p1
        c2 = c1 + p2
        c3 = c2 + p3
        if v < c1:
            kind = 0
        elif v < c2:
            kind = 1
        elif v < c3:
            kind = 2
        elif p4 > 0.0:
            kind = 3
        elif p3 > 0.0:
            kind = 2
        elif p2 > 0.0:
            kind = 1
        else:
            kind = 0
        if kind == 0:
            S += 1
        elif kind == 1:
            F += 1
        elif kind == 2:
            S -= 1
            F += 2
        else:
            D += 1
        t = t_next
        n_events += 1
        ev_t[m] = t
        ev_kind[m] = kind
        ev_S[m] = S
        ev_D[m] = D
        ev_F[m] = F
        m += 1
    return t, S, D, F, n_events, i, m, status


@njit(cache=True)
def _rhs(a0, a1, a2, r, clip, t, stem):
    q = q_value(a0, a1, a2, t, clip)
    return r * (1.0 - q) * stem, r * q * stem


@njit(cache=True)
def rk4_path(a0, a1, a2, r, clip, S0, grid, h_max):
    """Classic RK4 for (S*, F) from t=0 across ``grid``, steps no longer than ``h_max``.

    Returns (stem, diff, ok); ``ok`` is False if q was non-finite somewhere.
    """
    n = grid.shape[0]
    stem = np.empty(n)
    diff = np.empty(n)
    x = S0
    y = 0.0
    t = 0.0
    ok = True
    for j in range(n):
        target = grid[j]
        span = target - t
        if span > 0.0:
            n_sub = max(1, int(math.ceil(span / h_max)))
            h = span / n_sub
            for _ in range(n_sub):
                k1x, k1y = _rhs(a0, a1, a2, r, clip, t, x)
                k2x, k2y = _rhs(a0, a1, a2, r, clip, t + 0.5 * h, x + 0.5 * h * k1x)
                k3x, k3y = _rhs(a0, a1, a2, r, clip, t + 0.5 * h, x + 0.5 * h * k2x)
                k4x, k4y = _rhs(a0, a1, a2, r, clip, t + h, x + h * k3x)
                x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
                y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
                t += h
            t = target
        if not (x == x and y == y) or math.isinf(x) or math.isinf(y):
            ok = False
        stem[j] = x
        diff[j] = y
    return stem, diff, ok
