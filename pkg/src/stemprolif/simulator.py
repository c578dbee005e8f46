"""Event-driven stochastic simulation of stem-cell divisions.

Only viable stem cells divide, each at constant rate ``r``, so waiting times
between events are exponential with total rate ``r*S``. The division kind at
an event is drawn from the probabilities induced by q at the event time.

Random streams come from numpy's PCG64 seeded through ``SeedSequence``. The
stream for subject ``i`` of a cohort is ``SeedSequence(base_seed,
spawn_key=(*prefix, i))``; the sweep uses ``prefix=(config, replicate)``.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from .errors import DomainError, InvalidConfig
from .model import (
    DivisionKind,
    PopulationState,
    ProbGenConfig,
    ProliferationCoeffs,
    check_domain,
    stem_trajectory,
)

log = logging.getLogger(__name__)

CHUNK_EVENTS = 1 << 15
DEFAULT_MAX_EVENTS = 5_000_000
# default horizon: expected S* back down to this fraction of its peak
HORIZON_FRAC = 0.3


@dataclass(frozen=True)
class SimConfig:
    S0: int
    r: float
    coeffs: ProliferationCoeffs
    probgen: ProbGenConfig = field(default_factory=ProbGenConfig)
    horizon: float = 100.0
    max_events: int = DEFAULT_MAX_EVENTS
    seed: int = 0
    # clamp q(t) into [0, 2] instead of rejecting configurations that leave it
    clip_q: bool = False

    def __post_init__(self):
        if not isinstance(self.coeffs, ProliferationCoeffs):
            object.__setattr__(self, "coeffs", ProliferationCoeffs(*self.coeffs))
        if int(self.S0) != self.S0 or self.S0 < 1:
            raise InvalidConfig(f"S0 must be a positive integer, got {self.S0}")
        if not self.r > 0:
            raise InvalidConfig(f"r must be > 0, got {self.r}")
        if not self.horizon > 0:
            raise InvalidConfig(f"horizon must be > 0, got {self.horizon}")
        if self.max_events < 1:
            raise InvalidConfig("max_events must be >= 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise InvalidConfig("seed must be an unsigned 64-bit integer")

    def to_dict(self):
        d = asdict(self)
        d["coeffs"] = list(self.coeffs.as_tuple())
        return d


@dataclass
class EventLog:
    """Struct-of-arrays event record: time, kind and state after each event."""

    initial: PopulationState
    t: np.ndarray
    kind: np.ndarray
    S: np.ndarray
    D: np.ndarray
    F: np.ndarray
    final: PopulationState
    stop_reason: str

    def __len__(self):
        return len(self.t)

    def records(self):
        for i in range(len(self.t)):
            yield (float(self.t[i]), DivisionKind(int(self.kind[i])),
                   PopulationState(float(self.t[i]), int(self.S[i]), int(self.D[i]), int(self.F[i])))


@dataclass(frozen=True)
class Subject:
    id: str
    t: np.ndarray
    S_star: np.ndarray
    F: np.ndarray
    # hidden truth, only when simulated
    S: np.ndarray | None = None
    D: np.ndarray | None = None

    @property
    def n(self):
        return self.S_star + self.F


@dataclass
class Cohort:
    subjects: list
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.subjects)

    def __eq__(self, other):
        if not isinstance(other, Cohort) or len(self) != len(other):
            return False
        for a, b in zip(self.subjects, other.subjects):
            if a.id != b.id:
                return False
            for name in ("t", "S_star", "F"):
                if not np.array_equal(getattr(a, name), getattr(b, name)):
                    return False
        return True


def validate_schedule(times):
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 2:
        raise InvalidConfig("schedule needs at least two time points")
    if times[0] <= 0 or np.any(np.diff(times) <= 0):
        raise InvalidConfig("schedule must be strictly increasing with first time > 0")
    return times


def equally_spaced_schedule(horizon, T):
    """T times equally spaced over (0, horizon]."""
    return validate_schedule(horizon * np.arange(1, T + 1) / T)


def subject_rng(base_seed, *key):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(base_seed), spawn_key=tuple(key))))


_STOP = {
    _kernels.EXTINCT: "extinct",
    _kernels.HORIZON: "horizon",
    _kernels.MAX_EVENTS: "max_events",
}


def _simulate(cfg: SimConfig, rng, record=True, schedule=None):
    """Shared driver: optionally keep all events, optionally sample a schedule."""
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(cfg.seed))))
    c = cfg.coeffs
    k, s = float(cfg.probgen.k), float(cfg.probgen.s)
    t, S, D, F, n_events = 0.0, int(cfg.S0), 0, 0, 0
    initial = PopulationState(0.0, S, 0, 0)

    ev_t = np.empty(CHUNK_EVENTS)
    ev_kind = np.empty(CHUNK_EVENTS, dtype=np.int8)
    ev_S = np.empty(CHUNK_EVENTS, dtype=np.int64)
    ev_D = np.empty(CHUNK_EVENTS, dtype=np.int64)
    ev_F = np.empty(CHUNK_EVENTS, dtype=np.int64)
    kept = []

    if schedule is not None:
        schedule = np.asarray(schedule, dtype=float)
        sampled = np.empty((schedule.size, 3), dtype=np.int64)
        filled = 0

    leftover = np.empty(0)
    while True:
        uniforms = np.concatenate([leftover, rng.random(2 * CHUNK_EVENTS - leftover.size)])
        before = (S, D, F)
        t, S, D, F, n_events, used, m, status = _kernels.gillespie_chunk(
            t, S, D, F, n_events, float(cfg.horizon), int(cfg.max_events), float(cfg.r),
            c.a0, c.a1, c.a2, k, s, bool(cfg.clip_q), uniforms,
            ev_t, ev_kind, ev_S, ev_D, ev_F)
        leftover = uniforms[used:]
        if status == _kernels.INVALID_PROBS:
            raise InvalidConfig(
                f"division probabilities invalid at t={t:.6g} (q outside the range "
                f"allowed by k={k}, s={s}); use k=2 or clip_q")
        if record and m:
            kept.append((ev_t[:m].copy(), ev_kind[:m].copy(), ev_S[:m].copy(),
                         ev_D[:m].copy(), ev_F[:m].copy()))
        if schedule is not None and filled < schedule.size:
            if status != _kernels.BUFFER_EXHAUSTED:
                upto = schedule.size
            elif m:
                # later events cannot precede the last one written
                upto = int(np.searchsorted(schedule, ev_t[m - 1], side="right"))
            else:
                upto = filled
            if upto > filled:
                idx = np.searchsorted(ev_t[:m], schedule[filled:upto], side="right") - 1
                block = np.tile(np.array(before, dtype=np.int64), (upto - filled, 1))
                hit = idx >= 0
                block[hit, 0] = ev_S[idx[hit]]
                block[hit, 1] = ev_D[idx[hit]]
                block[hit, 2] = ev_F[idx[hit]]
                sampled[filled:upto] = block
                filled = upto
        if status != _kernels.BUFFER_EXHAUSTED:
            break

    final = PopulationState(float(t), int(S), int(D), int(F))
    if kept:
        arrays = [np.concatenate(parts) for parts in zip(*kept)]
    else:
        arrays = [np.empty(0), np.empty(0, np.int8)] + [np.empty(0, np.int64)] * 3
    events = EventLog(initial, *arrays, final=final, stop_reason=_STOP[status]) if record else None
    if schedule is not None:
        return events, sampled
    return events


def gillespie_run(cfg: SimConfig, rng=None) -> EventLog:
    """Simulate one lineage to extinction, the horizon or ``max_events``."""
    return _simulate(cfg, rng, record=True)


def sample_at_times(events: EventLog, schedule, subject_id="0") -> Subject:
    """State after the last event at or before each schedule time."""
    times = np.asarray(schedule, dtype=float)
    idx = np.searchsorted(events.t, times, side="right") - 1
    init = events.initial
    S = np.where(idx >= 0, events.S[np.maximum(idx, 0)] if len(events) else init.S, init.S)
    D = np.where(idx >= 0, events.D[np.maximum(idx, 0)] if len(events) else init.D, init.D)
    F = np.where(idx >= 0, events.F[np.maximum(idx, 0)] if len(events) else init.F, init.F)
    S, D, F = (np.asarray(a, dtype=np.int64) for a in (S, D, F))
    return Subject(str(subject_id), times, S + D, F, S=S, D=D)


def simulate_subject(cfg: SimConfig, schedule, rng, subject_id="0") -> Subject:
    """Like ``sample_at_times(gillespie_run(...))`` without keeping the events."""
    times = validate_schedule(schedule)
    _, sampled = _simulate(cfg, rng, record=False, schedule=times)
    S, D, F = sampled.T
    return Subject(str(subject_id), times, S + D, F, S=S.copy(), D=D.copy())


def generate_cohort(cfg: SimConfig, schedule, n_subjects, base_seed=None, key=()) -> Cohort:
    """Independent subjects; subject ``i`` draws from ``subject_rng(base_seed, *key, i)``."""
    if n_subjects < 1:
        raise InvalidConfig("n_subjects must be >= 1")
    base_seed = cfg.seed if base_seed is None else base_seed
    times = validate_schedule(schedule)
    subjects = [simulate_subject(cfg, times, subject_rng(base_seed, *key, i), subject_id=str(i))
                for i in range(n_subjects)]
    meta = {"config": cfg.to_dict(), "schedule": times.tolist(), "base_seed": int(base_seed),
            "spawn_key": list(key), "n_subjects": int(n_subjects)}
    return Cohort(subjects, meta)


def default_horizon(coeffs, r, S0=1.0, frac=HORIZON_FRAC, clip=False, t_cap=None):
    """Time after the peak at which the expected S* first drops to ``frac`` of the peak.

    Uses the closed form when q is defined on the search window, otherwise a
    clipped RK4 solution. Returns ``(horizon, reached)``; ``reached`` is False
    when S* never decays that far before ``t_cap``.
    """
    c = coeffs if isinstance(coeffs, ProliferationCoeffs) else ProliferationCoeffs(*coeffs)
    if t_cap is None:
        t_cap = 200.0 / r
    step = min(0.05 / r, 0.5)
    grid = np.arange(0.0, t_cap + step, step)
    try:
        if clip:
            raise DomainError("clipped")
        check_domain(c, 0.0, grid[-1])
        stem = stem_trajectory(c, r, S0, grid)
    except DomainError:
        if not clip:
            raise
        # q has jumps here, so a fixed fine step rather than a convergence check
        stem, _, _ = _kernels.rk4_path(c.a0, c.a1, c.a2, float(r), True, float(S0),
                                       grid, min(0.01, 0.005 / r))
    peak = int(np.argmax(stem))
    below = np.nonzero(stem[peak:] <= frac * stem[peak])[0]
    if below.size == 0:
        return float(grid[-1]), False
    j = peak + int(below[0])
    # linear interpolation in log space between the bracketing grid points
    y0, y1 = np.log(stem[j - 1]), np.log(stem[j])
    target = np.log(frac * stem[peak])
    w = (y0 - target) / (y0 - y1) if y0 != y1 else 1.0
    return float(grid[j - 1] + w * step), True
