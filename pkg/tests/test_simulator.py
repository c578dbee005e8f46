import json
import os
import subprocess
import sys

import numpy as np
import pytest
from scipy import stats

from stemprolif import simulator
from stemprolif.errors import InvalidConfig
from stemprolif.model import DivisionKind, ProbGenConfig, division_probs, stem_trajectory
from stemprolif.simulator import (
    SimConfig,
    default_horizon,
    equally_spaced_schedule,
    generate_cohort,
    gillespie_run,
    sample_at_times,
    simulate_subject,
    subject_rng,
)

BASE = SimConfig(S0=300, r=0.15, coeffs=(1.25, -0.055, 0.004),
                 probgen=ProbGenConfig(k=3, s=0.01), horizon=40.0)


def test_event_log_invariants():
    log = gillespie_run(BASE, subject_rng(5))
    assert len(log) > 100
    assert np.all(np.diff(log.t) > 0)
    assert log.t[-1] <= BASE.horizon
    n = log.S + log.D + log.F
    assert np.all(np.diff(np.concatenate([[BASE.S0], n])) == 1)
    assert log.final.n == BASE.S0 + len(log)
    assert log.stop_reason in ("horizon", "extinct")
    # D and F never decrease
    assert np.all(np.diff(log.D) >= 0) and np.all(np.diff(log.F) >= 0)


def test_same_seed_same_path():
    a = gillespie_run(BASE, subject_rng(9, 1, 2))
    b = gillespie_run(BASE, subject_rng(9, 1, 2))
    c = gillespie_run(BASE, subject_rng(9, 1, 3))
    assert np.array_equal(a.t, b.t) and np.array_equal(a.kind, b.kind)
    assert not np.array_equal(a.t[:10], c.t[:10])


def test_chunk_size_does_not_change_the_path(monkeypatch):
    ref = gillespie_run(BASE, subject_rng(11))
    sched = equally_spaced_schedule(BASE.horizon, 9)
    ref_subj = simulate_subject(BASE, sched, subject_rng(11))
    monkeypatch.setattr(simulator, "CHUNK_EVENTS", 7)
    small = gillespie_run(BASE, subject_rng(11))
    small_subj = simulate_subject(BASE, sched, subject_rng(11))
    assert np.array_equal(ref.t, small.t) and np.array_equal(ref.F, small.F)
    assert np.array_equal(ref_subj.S_star, small_subj.S_star)
    assert np.array_equal(ref_subj.F, small_subj.F)


def test_sample_at_times_matches_streaming_sampler():
    sched = np.array([0.5, 3.0, 10.0, 22.2, 40.0])
    log = gillespie_run(BASE, subject_rng(13))
    a = sample_at_times(log, sched)
    b = simulate_subject(BASE, sched, subject_rng(13))
    for name in ("S_star", "F", "S", "D"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_sample_at_times_before_any_event():
    cfg = SimConfig(S0=4, r=1e-9, coeffs=(1.0,), horizon=2.0)
    subj = sample_at_times(gillespie_run(cfg, subject_rng(0)), [1.0, 2.0])
    assert subj.S_star.tolist() == [4, 4] and subj.F.tolist() == [0, 0]


def test_extinction_stops_early():
    # q = 2 everywhere: every division differentiates both daughters
    cfg = SimConfig(S0=20, r=1.0, coeffs=(1e6,), probgen=ProbGenConfig(k=2), horizon=1e6)
    log = gillespie_run(cfg, subject_rng(1))
    assert log.stop_reason == "extinct"
    assert log.final.S == 0 and log.final.F == 40 and len(log) == 20


def test_max_events_cap():
    cfg = SimConfig(S0=50, r=1.0, coeffs=(0.5,), probgen=ProbGenConfig(k=2), horizon=1e6,
                    max_events=123)
    log = gillespie_run(cfg, subject_rng(1))
    assert len(log) == 123 and log.stop_reason == "max_events"


def test_invalid_probabilities_are_reported():
    cfg = SimConfig(S0=100, r=0.2, coeffs=(1.2, -0.11, 0.005), probgen=ProbGenConfig(k=3),
                    horizon=30.0)
    with pytest.raises(InvalidConfig, match="k=2 or clip_q"):
        gillespie_run(cfg, subject_rng(0))
    # clipping instead of rejecting keeps it running
    gillespie_run(SimConfig(S0=100, r=0.3, coeffs=(1.2, -0.237, 0.005),
                            probgen=ProbGenConfig(k=2), horizon=20.0, clip_q=True), subject_rng(0))


def test_division_kind_frequencies():
    # constant q: kinds are iid with the closed-form probabilities
    pg = ProbGenConfig(k=3, s=0.2)
    cfg = SimConfig(S0=2000, r=1.0, coeffs=(1.0,), probgen=pg, horizon=1e9, max_events=40000)
    log = gillespie_run(cfg, subject_rng(21))
    observed = np.bincount(log.kind, minlength=4)
    expected = division_probs(1.0, pg).as_array() * len(log)
    assert stats.chisquare(observed, expected).pvalue > 1e-3


def test_waiting_times_are_exponential():
    cfg = SimConfig(S0=500, r=0.7, coeffs=(1.0,), probgen=ProbGenConfig(k=3, s=0.1),
                    horizon=1e9, max_events=5000)
    log = gillespie_run(cfg, subject_rng(4))
    S_before = np.concatenate([[cfg.S0], log.S[:-1]])
    gaps = np.diff(np.concatenate([[0.0], log.t])) * cfg.r * S_before
    assert stats.kstest(gaps, "expon").pvalue > 1e-3


def test_cohort_seeding_and_metadata():
    sched = equally_spaced_schedule(30.0, 5)
    a = generate_cohort(BASE, sched, 3, base_seed=5, key=(1, 2))
    b = generate_cohort(BASE, sched, 3, base_seed=5, key=(1, 2))
    assert a == b
    assert a.metadata["spawn_key"] == [1, 2] and a.metadata["schedule"] == sched.tolist()
    single = simulate_subject(BASE, sched, subject_rng(5, 1, 2, 1), subject_id="1")
    assert np.array_equal(a.subjects[1].F, single.F)


@pytest.mark.parametrize("bad", [[0.0, 1.0], [1.0, 1.0], [2.0, 1.0], [1.0]])
def test_schedule_validation(bad):
    with pytest.raises(InvalidConfig):
        simulator.validate_schedule(bad)


@pytest.mark.parametrize("kwargs", [dict(S0=0), dict(S0=2.5), dict(r=0.0), dict(horizon=-1)])
def test_config_validation(kwargs):
    base = dict(S0=10, r=0.1, coeffs=(1.0,))
    with pytest.raises(InvalidConfig):
        SimConfig(**{**base, **kwargs})


def test_default_horizon_hits_fraction_of_peak():
    c, r = (0.8, -0.06, 0.05), 0.05
    h, reached = default_horizon(c, r, 1000, frac=0.3)
    grid = np.linspace(0, h, 4001)
    stem = stem_trajectory(c, r, 1000, grid)
    assert reached
    assert stem[-1] == pytest.approx(0.3 * stem.max(), rel=1e-3)


def test_default_horizon_reports_when_never_reached():
    _, reached = default_horizon((0.5,), 0.1, 100, t_cap=50)
    assert not reached


WORKER = """
import json, sys
from stemprolif import backend
from stemprolif.model import ProbGenConfig
from stemprolif.simulator import SimConfig, gillespie_run, subject_rng
cfg = SimConfig(S0=300, r=0.15, coeffs=(1.25, -0.055, 0.004),
                probgen=ProbGenConfig(k=3, s=0.01), horizon=40.0)
log = gillespie_run(cfg, subject_rng(17))
print(json.dumps({"backend": backend(), "t": log.t.tolist(), "kind": log.kind.tolist()}))
"""


def _run_backend(disable):
    env = dict(os.environ, STEMPROLIF_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", WORKER], env=env, capture_output=True,
                         text=True, check=True)
    return json.loads(out.stdout)


def test_numba_and_python_backends_agree():
    fast, slow = _run_backend(False), _run_backend(True)
    assert slow["backend"] == "python"
    assert fast["kind"] == slow["kind"]
    assert np.allclose(fast["t"], slow["t"], rtol=1e-12, atol=0)


def test_kind_enum_matches_kernel_codes():
    assert [k.value for k in DivisionKind] == [0, 1, 2, 3]
