import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stemprolif.errors import RankDeficient, TooLarge
from stemprolif.regression import (
    RegressionProblem,
    check_loss,
    lad_objective,
    lad_oracle,
    median_fit,
    ols_fit,
    wls_fit,
)


def test_check_loss_values():
    assert check_loss(2.0) == 1.0
    assert check_loss(-2.0) == 1.0
    assert check_loss(-2.0, tau=0.25) == 1.5
    assert check_loss(2.0, tau=0.25) == 0.5
    with pytest.raises(ValueError):
        check_loss(1.0, tau=1.0)


def test_median_fit_worked_example():
    X = np.column_stack([np.ones(3), [1.0, 2.0, 3.0]])
    fit = median_fit(RegressionProblem(X, [1.0, 2.0, 100.0]))
    assert fit.coefficients == pytest.approx([-48.5, 49.5], abs=1e-9)
    assert fit.objective == pytest.approx(24.25, abs=1e-9)


def test_median_of_constant_model_is_sample_median():
    y = np.array([3.0, -1.0, 7.0, 2.0, 100.0])
    fit = median_fit(RegressionProblem(np.ones((5, 1)), y))
    assert fit.coefficients[0] == pytest.approx(np.median(y), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(4, 15), p=st.integers(1, 3),
       heavy=st.booleans())
def test_median_fit_attains_oracle_objective(seed, n, p, heavy):
    rng = np.random.default_rng(seed)
    t = rng.uniform(0, 10, n)
    X = np.column_stack([t ** j for j in range(p)])
    noise = rng.standard_cauchy(n) if heavy else rng.normal(size=n)
    y = X @ rng.normal(size=p) + noise
    prob = RegressionProblem(X, y)
    ours, oracle = median_fit(prob), lad_oracle(prob)
    assert ours.objective <= oracle.objective + 1e-8 * (1 + oracle.objective)
    if oracle.diagnostics["n_minimizers"] == 1:
        assert np.allclose(ours.coefficients, oracle.coefficients, rtol=1e-6, atol=1e-8)


def test_median_fit_with_repeated_design_rows():
    # pooled subjects share sample times, so rows repeat
    t = np.repeat([1.0, 2.0, 3.0, 4.0], 5)
    X = np.column_stack([np.ones_like(t), t, t * t])
    y = 0.5 + 0.1 * t + np.random.default_rng(3).laplace(size=t.size)
    fit = median_fit(RegressionProblem(X, y))
    assert fit.diagnostics["vertex_certified"]
    direct = np.array([lad_objective(X, y, b) for b in np.random.default_rng(0).normal(
        fit.coefficients, 0.05, size=(200, 3))])
    assert np.all(direct >= fit.objective - 1e-9)


def test_ols_matches_lstsq():
    rng = np.random.default_rng(1)
    X = np.column_stack([np.ones(20), rng.normal(size=(20, 2))])
    y = rng.normal(size=20)
    ref = np.linalg.lstsq(X, y, rcond=None)[0]
    assert np.allclose(ols_fit(RegressionProblem(X, y)).coefficients, ref, atol=1e-12)


def test_wls_equals_replicated_rows():
    rng = np.random.default_rng(2)
    t = np.arange(6.0)
    X = np.column_stack([np.ones(6), t])
    y = rng.normal(size=6)
    w = np.array([1, 3, 2, 1, 4, 2])
    weighted = wls_fit(RegressionProblem(X, y, w)).coefficients
    replicated = ols_fit(RegressionProblem(np.repeat(X, w, axis=0), np.repeat(y, w))).coefficients
    assert np.allclose(weighted, replicated, atol=1e-12)


def test_rank_deficient_names_dependent_column():
    t = np.arange(5.0)
    X = np.column_stack([np.ones(5), t, 2 * t])
    with pytest.raises(RankDeficient, match="dependent columns") as info:
        ols_fit(RegressionProblem(X, t))
    assert len(info.value.columns) == 1 and info.value.columns[0] in (1, 2)


def test_oracle_size_limit():
    with pytest.raises(TooLarge):
        lad_oracle(RegressionProblem(np.ones((16, 1)), np.zeros(16)))


@pytest.mark.parametrize("kwargs", [
    dict(predictors=np.ones((3, 1)), response=np.ones(4)),
    dict(predictors=np.ones((3, 1)), response=[1.0, np.nan, 2.0]),
    dict(predictors=np.ones((3, 1)), response=np.ones(3), weights=[1.0, 0.0, 1.0]),
])
def test_problem_validation(kwargs):
    with pytest.raises(ValueError):
        RegressionProblem(**kwargs)
