import numpy as np
import pytest

from stemprolif.errors import (
    AllDropped,
    DegenerateFit,
    InsufficientData,
    InsufficientPoints,
    NegativeEstimate,
    PipelineError,
)
from stemprolif.estimation import (
    EulerConfig,
    PipelineOptions,
    estimate_rate,
    estimate_S0,
    finite_differences,
    fit_prolif_coeffs,
    observed_q,
    predict,
    run_pipeline,
)
from stemprolif.model import ProbGenConfig, eval_q
from stemprolif.simulator import Cohort, SimConfig, Subject, equally_spaced_schedule, generate_cohort


def subject(sid, t, S_star, F):
    return Subject(sid, np.array(t, float), np.array(S_star), np.array(F))


def test_increment_per_hour():
    d = finite_differences(Cohort([subject("a", [0, 1], [100, 100], [0, 5])]))
    assert d.y.tolist() == [5.0] and d.dn.tolist() == [5.0]
    d = finite_differences(Cohort([subject("a", [2, 4], [100, 102], [0, 8])]))
    assert d.y.tolist() == [5.0]


def test_rate_from_two_intervals():
    c = Cohort([subject("a", [1, 2], [100, 100], [0, 5]),
                subject("b", [1, 2], [200, 200], [0, 10])])
    d = finite_differences(c)
    assert estimate_rate(d) == pytest.approx(0.05, abs=1e-12)
    assert estimate_rate(d, "mid") == pytest.approx(0.05, abs=1e-12)


def test_observed_q_and_dropping():
    c = Cohort([subject("a", [1, 2, 3, 4], [10, 12, 12, 13], [0, 2, 2, 1])])
    qp = observed_q(finite_differences(c))
    # intervals: dn=4,dF=2 -> q=0.5; dn=0 dropped; dn=0 (13+1 vs 12+2) dropped
    assert qp.q_obs.tolist() == [0.5]
    assert [why for _, why in qp.dropped] == ["dn<=0", "dn<=0"]
    with pytest.raises(AllDropped):
        observed_q(finite_differences(Cohort([subject("a", [1, 2], [5, 4], [0, 1])])))


def test_differences_need_two_points():
    with pytest.raises(InsufficientData):
        finite_differences(Cohort([subject("a", [1], [5], [0])]))


@pytest.mark.parametrize("method", ["QR", "WLS"])
def test_fit_recovers_exact_quadratic(method):
    c = (0.8, -0.06, 0.05)
    t = np.arange(1.0, 9.0)
    q = eval_q(c, t)
    got = fit_prolif_coeffs(np.column_stack([t, q]), method=method)
    assert np.allclose(got.as_tuple(), c, atol=1e-9)


def test_constant_q_one_gives_unit_polynomial():
    pts = [(t, 1.0) for t in (1.0, 2.0, 3.0, 5.0)]
    assert np.allclose(fit_prolif_coeffs(pts).as_tuple(), (1.0, 0.0, 0.0), atol=1e-12)


def test_fit_needs_three_distinct_times():
    with pytest.raises(InsufficientPoints):
        fit_prolif_coeffs([(1.0, 0.5), (1.0, 0.7), (2.0, 0.6), (2.0, 0.4)])
    with pytest.raises(InsufficientPoints):
        fit_prolif_coeffs([(1.0, 0.5), (2.0, 1.9999), (3.0, 2.0), (4.0, 0.4)])


def test_fit_rejects_nonpositive_P():
    # samples of P = 10 ((t - 1.5)^2 - 0.1) are all >= 1.5, but P < 0 near t = 1.5
    t = np.array([0.0, 1.0, 2.0, 3.0])
    q = 2.0 - 1.0 / (10 * ((t - 1.5) ** 2 - 0.1))
    with pytest.raises(DegenerateFit) as info:
        fit_prolif_coeffs(np.column_stack([t, q]), method="WLS")
    assert 1.0 < info.value.t < 2.0


def test_predict_at_zero():
    rows = predict((1.25, -0.055, 0.004), 0.15, 2000.0, [0.0, 5.0])
    assert rows[0].tolist() == [0.0, 2000.0, 0.0]
    assert rows.shape == (2, 3)


def first_sample_cohort(n_first, t_first):
    return Cohort([subject("a", [t_first, t_first + 1], [n_first, n_first], [0, 1])])


def test_S0_identity_when_rate_zero():
    assert estimate_S0(0.0, first_sample_cohort(750, 4.0)) == 750.0


def test_S0_observed_at_time_zero():
    diag = {}
    assert estimate_S0(0.3, first_sample_cohort(640, 0.0), diagnostics=diag) == 640.0
    assert diag["hidden_stem"] == "observed"


def test_S0_backward_euler_converges_first_order():
    r, t0, n0 = 0.1, 5.0, 1000.0
    exact = n0 * np.exp(-r * t0)
    c = first_sample_cohort(n0, t0)
    errs = [abs(estimate_S0(r, c, EulerConfig(K=K)) - exact) for K in (101, 201, 401, 801)]
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all(np.abs(ratios - 2.0) < 0.05)
    assert errs[-1] / exact < 1e-3


def test_S0_with_model_stem_matches_closed_form():
    # q = 1: S* is flat, so n drops linearly by r S* t
    c = Cohort([subject("a", [4.0, 5.0], [300, 300], [120, 150])])
    got = estimate_S0(0.1, c, EulerConfig(K=500), coeffs=(1.0, 0.0, 0.0))
    assert got == pytest.approx(420 - 0.1 * 300 * 4.0, rel=1e-12)


def test_S0_clamps_and_warns():
    with pytest.warns(NegativeEstimate):
        assert estimate_S0(5.0, first_sample_cohort(10, 10.0), EulerConfig(K=2)) == 0.0


BASE = SimConfig(S0=2000, r=0.15, coeffs=(1.25, -0.055, 0.004),
                 probgen=ProbGenConfig(k=3, s=0.01), horizon=40.0)


@pytest.fixture(scope="module")
def cohort():
    return generate_cohort(BASE, equally_spaced_schedule(40.0, 12), 5, base_seed=8)


def test_pipeline_is_invariant_to_subject_order(cohort):
    a = run_pipeline(cohort)
    b = run_pipeline(Cohort(cohort.subjects[::-1], cohort.metadata))
    assert a.r_hat == b.r_hat and a.S0_hat == b.S0_hat
    assert a.coeffs_hat.as_tuple() == b.coeffs_hat.as_tuple()


def test_pipeline_report_is_reasonable(cohort):
    rep = run_pipeline(cohort, PipelineOptions(method="wls"))
    assert rep.method == "WLS"
    assert rep.r_hat == pytest.approx(0.15, rel=0.1)
    assert rep.S0_hat == pytest.approx(2000, rel=0.1)
    assert rep.predicted.shape == (12, 3)
    d = rep.to_dict()
    assert set(d) >= {"r_hat", "S0_hat", "coeffs_hat", "q_points", "predicted", "diagnostics"}


def test_pipeline_tags_failing_stage():
    with pytest.raises(PipelineError) as info:
        run_pipeline(Cohort([subject("a", [1], [5], [0])]))
    assert info.value.stage == "finite_differences"
    flat = Cohort([subject("a", [1, 2, 3], [5, 5, 5], [0, 1, 2])])
    with pytest.raises(PipelineError) as info:
        run_pipeline(flat)
    assert info.value.stage == "estimate_rate"
    assert str(info.value).startswith("[estimate_rate] DegenerateDesign")


@pytest.mark.parametrize("kwargs", [dict(method="lad"), dict(time_assignment="right"),
                                    dict(hidden_stem="none")])
def test_options_validation(kwargs):
    with pytest.raises(ValueError):
        PipelineOptions(**kwargs)
