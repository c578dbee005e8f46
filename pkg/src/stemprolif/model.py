"""Three-state division model: proliferation function, division probabilities,
state transitions and deterministic trajectories of the observable counts.

The proliferation function is ``q(t) = 2 - 1/P(t)`` with the quadratic
``P(t) = a0 + a1*t + a2*t**2``. Observable stem cells ``S* = S + D`` and
differentiated cells ``F`` follow

    dS*/dt = r (1 - q(t)) S*,    dF/dt = r q(t) S*.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .errors import (
    DomainError,
    InvalidConfig,
    NoViableCells,
    RangeWarning,
    StepSizeError,
)

PROB_TOL = 1e-12


@dataclass(frozen=True)
class ProliferationCoeffs:
    a0: float
    a1: float = 0.0
    a2: float = 0.0

    def as_tuple(self):
        return (self.a0, self.a1, self.a2)

    @property
    def discriminant(self):
        return 4.0 * self.a0 * self.a2 - self.a1 ** 2


class DivisionKind(enum.IntEnum):
    SymmetricRenewal = 0
    AsymmetricDivision = 1
    SymmetricDifferentiation = 2
    ViableNonviablePair = 3


@dataclass(frozen=True)
class DivisionProbabilities:
    p1: float
    p2: float
    p3: float
    p4: float
    t: float = float("nan")

    def as_array(self):
        return np.array([self.p1, self.p2, self.p3, self.p4])


@dataclass(frozen=True)
class ProbGenConfig:
    """Shape ``k >= 2`` and nonviable fraction ``0 <= s < 1`` used to split q(t)."""

    k: float = 3.0
    s: float = 0.0

    def __post_init__(self):
        if not self.k >= 2:
            raise InvalidConfig(f"k must be >= 2, got {self.k}")
        if not 0 <= self.s < 1:
            raise InvalidConfig(f"s must lie in [0, 1), got {self.s}")

    @property
    def q_min(self):
        """Smallest q for which the construction yields p3 >= 0."""
        return (self.k - 2.0) / (self.k - 1.0)


@dataclass(frozen=True)
class PopulationState:
    t: float
    S: int
    D: int = 0
    F: int = 0

    def __post_init__(self):
        if min(self.S, self.D, self.F) < 0:
            raise ValueError(f"negative count in {self}")

    @property
    def S_star(self):
        return self.S + self.D

    @property
    def n(self):
        return self.S + self.D + self.F


def _coeffs(c):
    if isinstance(c, ProliferationCoeffs):
        return c
    return ProliferationCoeffs(*map(float, c))


def eval_P(coeffs, t):
    c = _coeffs(coeffs)
    t = np.asarray(t, dtype=float)
    out = c.a0 + c.a1 * t + c.a2 * t * t
    return out if out.ndim else float(out)


def eval_q(coeffs, t):
    """q(t) = 2 - 1/P(t). Raises DomainError where P <= 0.

    Values outside [0, 2] are returned as computed with a RangeWarning.
    """
    P = np.asarray(eval_P(coeffs, t))
    if np.any(P <= 0):
        bad = np.atleast_1d(np.asarray(t, dtype=float))[np.atleast_1d(P <= 0)]
        raise DomainError(f"P(t) <= 0 at t={bad[0]:g}; q undefined")
    q = 2.0 - 1.0 / P
    if np.any((q < -PROB_TOL) | (q > 2.0 + PROB_TOL)):
        warnings.warn(f"q(t) outside [0, 2] (min {q.min():.4g}, max {q.max():.4g})",
                      RangeWarning, stacklevel=2)
    return q if q.ndim else float(q)


def division_probs(q, cfg: ProbGenConfig, t=float("nan")):
    """Split q into the four division probabilities for shape ``k`` and
    nonviable fraction ``s``.

    >>> division_probs(1.0, ProbGenConfig(k=4, s=0)).as_array()
    array([0.25, 0.5 , 0.25, 0.  ])
    """
    if not -PROB_TOL <= q <= 2.0 + PROB_TOL:
        raise InvalidConfig(f"q={q!r} outside [0, 2]")
    k, s = cfg.k, cfg.s
    w = 2.0 - q
    p = (w / k * (1.0 - s), w * (k - 2.0) / k, (2.0 - k + (k - 1.0) * q) / k, w / k * s)
    for name, value in zip(("p1", "p2", "p3", "p4"), p):
        if value < -PROB_TOL:
            hint = f" (needs q >= (k-2)/(k-1) = {cfg.q_min:.6g})" if name == "p3" else ""
            raise InvalidConfig(f"{name}={value:.3g} < 0 for q={q:.6g}, k={k}, s={s}{hint}")
    return DivisionProbabilities(*(max(v, 0.0) for v in p), t=t)


def apply_division(state: PopulationState, kind) -> PopulationState:
    if state.S < 1:
        raise NoViableCells(f"no viable stem cells at t={state.t}")
    kind = DivisionKind(kind)
    if kind is DivisionKind.SymmetricRenewal:
        return replace(state, S=state.S + 1)
    if kind is DivisionKind.AsymmetricDivision:
        return replace(state, F=state.F + 1)
    if kind is DivisionKind.SymmetricDifferentiation:
        return replace(state, S=state.S - 1, F=state.F + 2)
    return replace(state, D=state.D + 1)


# -- closed form ------------------------------------------------------------

def _branch(c: ProliferationCoeffs):
    if c.a2 == 0.0:
        return "constant" if c.a1 == 0.0 else "linear"
    delta = c.discriminant
    if abs(delta) <= 1e-12 * max(c.a1 ** 2, abs(4.0 * c.a0 * c.a2)):
        return "double"
    return "atan" if delta > 0 else "log"


def _real_roots(c: ProliferationCoeffs):
    branch = _branch(c)
    if branch == "constant":
        return ()
    if branch == "linear":
        return (-c.a0 / c.a1,)
    if branch == "double":
        return (-c.a1 / (2.0 * c.a2),)
    if branch == "atan":
        return ()
    m = math.sqrt(-c.discriminant)
    return tuple(sorted(((-c.a1 - m) / (2 * c.a2), (-c.a1 + m) / (2 * c.a2))))


def check_domain(coeffs, lo, hi):
    """Raise DomainError unless P > 0 on the closed interval [lo, hi]."""
    c = _coeffs(coeffs)
    lo, hi = min(lo, hi), max(lo, hi)
    for root in _real_roots(c):
        if lo <= root <= hi:
            raise DomainError(f"P(t) has a root at t={root:.6g} inside [{lo:g}, {hi:g}]")
    if eval_P(c, lo) <= 0:
        raise DomainError(f"P(t) <= 0 on [{lo:g}, {hi:g}]")


def _inv_P_antiderivative(c, t):
    """An antiderivative of 1/P, branch by branch."""
    branch = _branch(c)
    if branch == "constant":
        return t / c.a0
    if branch == "linear":
        return np.log(np.abs(c.a0 + c.a1 * t)) / c.a1
    if branch == "double":
        return -2.0 / (c.a1 + 2.0 * c.a2 * t)
    if branch == "atan":
        sd = math.sqrt(c.discriminant)
        return 2.0 / sd * np.arctan((c.a1 + 2.0 * c.a2 * t) / sd)
    m = math.sqrt(-c.discriminant)
    u = 2.0 * c.a2 * t + c.a1
    return np.log(np.abs((u - m) / (u + m))) / m


def integral_inv_P(coeffs, t0, t1):
    """Definite integral of 1/P over [t0, t1] (vectorised over t1)."""
    c = _coeffs(coeffs)
    t1 = np.asarray(t1, dtype=float)
    if _branch(c) == "atan":
        # difference of arctangents without cancellation
        sd = math.sqrt(c.discriminant)
        u1 = (c.a1 + 2.0 * c.a2 * t1) / sd
        u0 = (c.a1 + 2.0 * c.a2 * t0) / sd
        out = 2.0 / sd * np.arctan2(u1 - u0, 1.0 + u1 * u0)
    else:
        out = _inv_P_antiderivative(c, t1) - _inv_P_antiderivative(c, t0)
    return out if out.ndim else float(out)


def antiderivative_Q(coeffs, t, domain=None):
    """Q(t) = 2t - (antiderivative of 1/P), integration constant zero.

    ``domain`` defaults to the interval between 0 and ``t``; a root of P
    inside it raises DomainError.
    """
    c = _coeffs(coeffs)
    t_arr = np.asarray(t, dtype=float)
    if domain is None:
        domain = (min(0.0, float(t_arr.min())), max(0.0, float(t_arr.max())))
    check_domain(c, *domain)
    out = 2.0 * t_arr - _inv_P_antiderivative(c, t_arr)
    return out if out.ndim else float(out)


def stem_trajectory(coeffs, r, S0, t):
    """Closed-form expected observable stem count S*(t)."""
    c = _coeffs(coeffs)
    t_arr = np.asarray(t, dtype=float)
    if t_arr.size:
        check_domain(c, min(0.0, float(t_arr.min())), max(0.0, float(t_arr.max())))
    # t - Q(t) + Q(0) = -t + int_0^t du / P(u)
    out = S0 * np.exp(r * (integral_inv_P(c, 0.0, t_arr) - t_arr))
    return out if out.ndim else float(out)


def _simpson(f, a, b, n):
    x = np.linspace(a, b, n + 1)
    y = f(x)
    h = (b - a) / n
    return h / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum())


def diff_trajectory(coeffs, r, S0, t, rtol=1e-8, panels=512, max_panels=16384):
    """Expected differentiated count F(t) = r * int_0^t q(u) S*(u) du.

    Composite Simpson, doubling the panel count until successive estimates
    agree to ``rtol`` or ``max_panels`` is reached.
    """
    c = _coeffs(coeffs)
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if t_arr.size:
        check_domain(c, min(0.0, float(t_arr.min())), max(0.0, float(t_arr.max())))

    def integrand(u):
        return (2.0 - 1.0 / eval_P(c, u)) * stem_trajectory(c, r, S0, u)

    out = np.empty_like(t_arr)
    for i, ti in enumerate(t_arr):
        if ti == 0.0:
            out[i] = 0.0
            continue
        n = panels
        prev = _simpson(integrand, 0.0, ti, n)
        while n < max_panels:
            n *= 2
            cur = _simpson(integrand, 0.0, ti, n)
            done = abs(cur - prev) <= rtol * abs(cur)
            prev = cur
            if done:
                break
        out[i] = r * prev
    return out if np.ndim(t) else float(out[0])


def ode_reference(coeffs, r, S0, t_grid, clip=False, rtol=1e-8, h0=None,
                  max_halvings=12):
    """Integrate the observable system with fixed-step RK4.

    The step is halved until two successive solutions agree to ``rtol`` at
    every grid point. ``clip=True`` clamps q(t) into [0, 2] and tolerates
    P crossing zero (used for configurations outside the valid family).
    Returns an array with columns (t, S*, F).
    """
    c = _coeffs(coeffs)
    grid = np.asarray(t_grid, dtype=float)
    if grid.ndim != 1 or np.any(np.diff(grid) < 0) or (grid.size and grid[0] < 0):
        raise ValueError("t_grid must be a non-decreasing sequence of times >= 0")
    if not clip and grid.size:
        check_domain(c, 0.0, float(grid[-1]))
    if h0 is None:
        h0 = min(0.1, 0.05 / max(r, 1e-12))
    h = h0
    prev = None
    for _ in range(max_halvings + 1):
        stem, diff, ok = _kernels.rk4_path(c.a0, c.a1, c.a2, float(r), bool(clip),
                                           float(S0), grid, h)
        if not ok:
            raise StepSizeError(f"non-finite solution with step {h:g}")
        cur = np.concatenate([stem, diff])
        if prev is not None:
            scale = np.maximum(np.abs(cur), 1e-12 * max(abs(S0), 1.0))
            if np.all(np.abs(cur - prev) <= rtol * scale):
                return np.column_stack([grid, stem, diff])
        prev = cur
        h /= 2.0
    raise StepSizeError(f"RK4 did not converge to rtol={rtol:g} after {max_halvings} halvings")
