"""Estimate division rate, initial stem count and proliferation function
from sparse longitudinal counts.

Stages, in order:

1. pooled finite differences of the total count ``n = S* + F``;
2. the slope of ``dn/dt ~ b0 + b1 S*`` is the rate;
3. ``dF/dn`` over each interval estimates q, and ``1/(2 - q)`` is fitted
   by a quadratic in t (median regression by default);
4. ``S(0)`` by stepping the total count backwards from the first sample;
5. predicted trajectories from the closed form.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import (
    AllDropped,
    DegenerateDesign,
    DegenerateFit,
    DomainError,
    InsufficientData,
    InsufficientPoints,
    NegativeEstimate,
    PipelineError,
    StemProlifError,
)
from .model import (
    ProliferationCoeffs,
    check_domain,
    diff_trajectory,
    eval_P,
    stem_trajectory,
)
from .regression import RegressionProblem, median_fit, ols_fit, wls_fit

log = logging.getLogger(__name__)

EPS_CLIP = 1e-3


class DifferenceObservation(NamedTuple):
    subject: str
    t_i: float
    y_i: float
    S_star_i: float
    dF_i: float
    dn_i: float


@dataclass(frozen=True)
class Differences:
    """Pooled consecutive-pair differences, one row per interval."""

    subject: np.ndarray
    t: np.ndarray
    t_next: np.ndarray
    y: np.ndarray
    S_star: np.ndarray
    S_star_next: np.ndarray
    dF: np.ndarray
    dn: np.ndarray

    def __len__(self):
        return len(self.t)

    def __iter__(self):
        for i in range(len(self)):
            yield DifferenceObservation(str(self.subject[i]), float(self.t[i]), float(self.y[i]),
                                        float(self.S_star[i]), float(self.dF[i]), float(self.dn[i]))

    def times(self, assignment="left"):
        if assignment == "left":
            return self.t
        if assignment == "mid":
            return 0.5 * (self.t + self.t_next)
        raise ValueError(f"unknown time assignment {assignment!r}")


@dataclass(frozen=True)
class EulerConfig:
    K: int = 1000
    aggregation: str = "median"

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("K must be >= 2")
        if self.aggregation not in ("median", "mean"):
            raise ValueError("aggregation must be 'median' or 'mean'")


@dataclass(frozen=True)
class PipelineOptions:
    method: str = "QR"
    euler: EulerConfig = field(default_factory=EulerConfig)
    # "mid" removes the first-order bias of left endpoints on coarse schedules
    time_assignment: str = "mid"
    eps_clip: float = EPS_CLIP
    # how S* is supplied on the unobserved interval before the first sample
    hidden_stem: str = "model"

    def __post_init__(self):
        object.__setattr__(self, "method", self.method.upper())
        if self.method not in ("QR", "WLS"):
            raise ValueError("method must be QR or WLS")
        if self.time_assignment not in ("left", "mid"):
            raise ValueError("time_assignment must be 'left' or 'mid'")
        if self.hidden_stem not in ("model", "total"):
            raise ValueError("hidden_stem must be 'model' or 'total'")


@dataclass(frozen=True)
class QPoints:
    t: np.ndarray
    q_obs: np.ndarray
    kept: np.ndarray
    dropped: tuple

    def __len__(self):
        return len(self.t)


@dataclass
class EstimateReport:
    r_hat: float
    S0_hat: float
    coeffs_hat: ProliferationCoeffs
    method: str
    q_points: list
    predicted: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "r_hat": self.r_hat,
            "S0_hat": self.S0_hat,
            "coeffs_hat": list(self.coeffs_hat.as_tuple()),
            "method": self.method,
            "q_points": [[float(t), float(q)] for t, q in self.q_points],
            "predicted": [[float(v) for v in row] for row in self.predicted],
            "diagnostics": _jsonable(self.diagnostics),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if hasattr(obj, "__dataclass_fields__"):
        return _jsonable(asdict(obj))
    return obj


def finite_differences(cohort) -> Differences:
    """Consecutive-pair differences per subject, pooled and put in a canonical
    order so that results do not depend on subject order."""
    cols = {k: [] for k in ("subject", "t", "t_next", "S_star", "S_star_next", "dF", "dn")}
    for subj in cohort.subjects:
        if len(subj.t) < 2:
            continue
        t = np.asarray(subj.t, dtype=float)
        n = np.asarray(subj.S_star, dtype=float) + np.asarray(subj.F, dtype=float)
        F = np.asarray(subj.F, dtype=float)
        cols["subject"].extend([subj.id] * (len(t) - 1))
        cols["t"].append(t[:-1])
        cols["t_next"].append(t[1:])
        cols["S_star"].append(np.asarray(subj.S_star, dtype=float)[:-1])
        cols["S_star_next"].append(np.asarray(subj.S_star, dtype=float)[1:])
        cols["dF"].append(np.diff(F))
        cols["dn"].append(np.diff(n))
    if not cols["t"]:
        raise InsufficientData("every subject has fewer than two time points")
    arr = {k: (np.asarray(v, dtype=object) if k == "subject" else np.concatenate(v))
           for k, v in cols.items()}
    if np.any(arr["t_next"] <= arr["t"]):
        raise InsufficientData("subject times must be strictly increasing")
    y = arr["dn"] / (arr["t_next"] - arr["t"])
    order = np.lexsort((arr["dF"], arr["dn"], arr["S_star"], arr["t_next"], arr["t"]))
    return Differences(arr["subject"][order], arr["t"][order], arr["t_next"][order], y[order],
                       arr["S_star"][order], arr["S_star_next"][order], arr["dF"][order],
                       arr["dn"][order])


def estimate_rate(diffs: Differences, time_assignment="left") -> float:
    """OLS slope of the per-hour total increment on S*.

    S* is taken at the interval start, or with ``time_assignment="mid"`` as
    the mean of both endpoints (trapezoid rule for the integral of S*).
    """
    stem = diffs.S_star if time_assignment == "left" else 0.5 * (diffs.S_star + diffs.S_star_next)
    if len(diffs) < 2 or np.ptp(stem) == 0:
        raise DegenerateDesign("S* is constant across observations; slope not identifiable")
    X = np.column_stack([np.ones(len(diffs)), stem])
    return float(ols_fit(RegressionProblem(X, diffs.y)).coefficients[1])


def _first_sample(cohort, aggregation):
    t_min = min(float(np.min(s.t)) for s in cohort.subjects)
    n_vals, s_vals = [], []
    for subj in cohort.subjects:
        hit = np.nonzero(np.asarray(subj.t, dtype=float) == t_min)[0]
        if hit.size:
            n_vals.append(float(subj.S_star[hit[0]] + subj.F[hit[0]]))
            s_vals.append(float(subj.S_star[hit[0]]))
    agg = np.median if aggregation == "median" else np.mean
    return t_min, float(agg(n_vals)), float(agg(s_vals))


def estimate_S0(r_hat, cohort, euler_cfg: EulerConfig = EulerConfig(), coeffs=None,
                diagnostics=None):
    """Backward Euler for the total count from the earliest sample to t=0.

    ``n(tau_{k-1}) = n(tau_k) - r * S*(tau_k) * dtau``. Without ``coeffs`` the
    unobserved S* is approximated by the total count itself. With fitted
    ``coeffs``, S* is stepped backwards alongside n from its observed value
    using ``dS*/dt = r (1 - q) S*``.
    """
    if not np.isfinite(r_hat):
        raise ValueError("r_hat must be finite")
    t_min, n_first, s_first = _first_sample(cohort, euler_cfg.aggregation)
    if t_min < 0:
        raise InsufficientData("sample times must be >= 0")
    if t_min == 0:
        # observed directly: everything present at t=0 is a stem cell
        if diagnostics is not None:
            diagnostics.update({"t_first": 0.0, "n_first": n_first, "S_star_first": s_first,
                                "K": 0, "dtau": 0.0, "clamped": False, "hidden_stem": "observed"})
        return float(n_first)
    K = euler_cfg.K
    dtau = t_min / (K - 1)
    tau = np.linspace(0.0, t_min, K)
    n_hat = n_first
    if coeffs is not None:
        q = 2.0 - 1.0 / eval_P(coeffs, tau)
        stem = s_first
    clamped = False
    for k in range(K - 1, 0, -1):
        proxy = stem if coeffs is not None else n_hat
        n_hat = n_hat - r_hat * proxy * dtau
        if coeffs is not None:
            stem = stem - r_hat * (1.0 - q[k]) * stem * dtau
        if n_hat < 0:
            clamped = True
            n_hat = 0.0
            break
    if clamped:
        warnings.warn("backward reconstruction of S(0) went negative; clamped to 0",
                      NegativeEstimate, stacklevel=2)
    if diagnostics is not None:
        diagnostics.update({"t_first": t_min, "n_first": n_first, "S_star_first": s_first,
                            "K": K, "dtau": dtau, "clamped": clamped,
                            "hidden_stem": "model" if coeffs is not None else "total"})
    return float(n_hat)


def observed_q(diffs: Differences, time_assignment="left") -> QPoints:
    """q at each interval from dF/dn; intervals with dn <= 0 or dF < 0 are dropped."""
    times = diffs.times(time_assignment)
    dropped = []
    keep = np.ones(len(diffs), dtype=bool)
    for i in range(len(diffs)):
        if diffs.dn[i] <= 0:
            dropped.append((i, "dn<=0"))
            keep[i] = False
        elif diffs.dF[i] < 0:
            dropped.append((i, "dF<0"))
            keep[i] = False
    if dropped:
        log.debug("observed_q dropped %d of %d intervals", len(dropped), len(diffs))
    if not keep.any():
        raise AllDropped("no interval has a positive total increment")
    idx = np.nonzero(keep)[0]
    return QPoints(times[idx], diffs.dF[idx] / diffs.dn[idx], idx, tuple(dropped))


def fit_prolif_coeffs(q_points, method="QR", eps_clip=EPS_CLIP, diagnostics=None):
    """Fit 1/(2 - q) = a0 + a1 t + a2 t^2 by median regression (QR) or WLS.

    WLS fits the per-time mean of 1/(2 - q) weighted by the number of pooled
    observations at that time.
    """
    if isinstance(q_points, QPoints):
        t, q = np.asarray(q_points.t, float), np.asarray(q_points.q_obs, float)
    else:
        arr = np.asarray(q_points, dtype=float).reshape(-1, 2)
        t, q = arr[:, 0], arr[:, 1]
    method = method.upper()
    if np.sum(q < 2.0 - eps_clip) < 3 or np.unique(t).size < 3:
        raise InsufficientPoints("need >= 3 points with q < 2 - eps at >= 3 distinct times")
    clipped = np.clip(q, 0.0, 2.0 - eps_clip)
    n_clipped = int(np.sum(clipped != q))
    z = 1.0 / (2.0 - clipped)
    # fit on rescaled time for conditioning, then map back
    scale = float(np.max(np.abs(t))) or 1.0
    u = t / scale
    if method == "QR":
        X = np.column_stack([np.ones_like(u), u, u * u])
        beta = median_fit(RegressionProblem(X, z)).coefficients
    elif method == "WLS":
        ut, inv = np.unique(u, return_inverse=True)
        counts = np.bincount(inv).astype(float)
        zbar = np.bincount(inv, weights=z) / counts
        X = np.column_stack([np.ones_like(ut), ut, ut * ut])
        beta = wls_fit(RegressionProblem(X, zbar, counts)).coefficients
    else:
        raise ValueError(f"unknown method {method!r}")
    coeffs = ProliferationCoeffs(float(beta[0]), float(beta[1] / scale), float(beta[2] / scale ** 2))
    lo, hi = float(t.min()), float(t.max())
    try:
        check_domain(coeffs, lo, hi)
    except DomainError as exc:
        grid = np.linspace(lo, hi, 201)
        bad = grid[eval_P(coeffs, grid) <= 0]
        raise DegenerateFit(f"fitted P(t) <= 0 on observed range: {exc}",
                            t=float(bad[0]) if bad.size else None) from exc
    if diagnostics is not None:
        diagnostics.update({"n_points": int(t.size), "n_clipped": n_clipped,
                            "q_obs_raw": q.tolist()})
    return coeffs


def predict(coeffs, r_hat, S0_hat, t_grid):
    """Rows of (t, S*_hat, F_hat) from the closed-form trajectories."""
    if isinstance(coeffs, EstimateReport):
        coeffs, r_hat, S0_hat = coeffs.coeffs_hat, coeffs.r_hat, coeffs.S0_hat
    t = np.asarray(t_grid, dtype=float)
    stem = np.atleast_1d(stem_trajectory(coeffs, r_hat, S0_hat, t))
    diff = np.atleast_1d(diff_trajectory(coeffs, r_hat, S0_hat, t))
    return np.column_stack([np.atleast_1d(t), stem, diff])


def run_pipeline(cohort, options: PipelineOptions = PipelineOptions()) -> EstimateReport:
    diag = {"options": asdict(options)}

    def stage(name, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (StemProlifError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            raise PipelineError(name, exc) from exc

    diffs = stage("finite_differences", finite_differences, cohort)
    diag["n_differences"] = len(diffs)
    r_hat = stage("estimate_rate", estimate_rate, diffs, options.time_assignment)
    qp = stage("observed_q", observed_q, diffs, options.time_assignment)
    diag["dropped"] = [{"index": int(i), "subject": str(diffs.subject[i]), "t": float(diffs.t[i]),
                        "reason": why} for i, why in qp.dropped]
    fit_diag = {}
    coeffs = stage("fit_prolif_coeffs", fit_prolif_coeffs, qp, options.method,
                   options.eps_clip, fit_diag)
    diag["fit"] = fit_diag
    s0_diag = {}
    hidden = coeffs if options.hidden_stem == "model" else None
    if hidden is not None:
        t_first = min(float(np.min(s.t)) for s in cohort.subjects)
        try:
            check_domain(coeffs, 0.0, t_first)
        except DomainError:
            hidden = None
            s0_diag["hidden_stem_fallback"] = "fitted P(t) <= 0 before first sample"
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", NegativeEstimate)
        S0_hat = stage("estimate_S0", estimate_S0, r_hat, cohort, options.euler, hidden, s0_diag)
    s0_diag["warnings"] = [str(w.message) for w in caught]
    diag["S0"] = s0_diag
    times = np.unique(np.concatenate([np.asarray(s.t, float) for s in cohort.subjects]))
    predicted = stage("predict", predict, coeffs, r_hat, S0_hat, times)
    return EstimateReport(r_hat, S0_hat, coeffs, options.method,
                          list(zip(qp.t.tolist(), qp.q_obs.tolist())), predicted, diag)
