"""Least squares, weighted least squares and median (LAD) regression."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import NonConvergence, RankDeficient, TooLarge

ORACLE_MAX_ROWS = 15
ORACLE_MAX_COLS = 3


@dataclass(frozen=True)
class RegressionProblem:
    predictors: np.ndarray
    response: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.predictors, dtype=float))
        if X.shape[0] == 1 and np.ndim(self.predictors) == 1:
            X = X.T
        y = np.asarray(self.response, dtype=float).ravel()
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"{X.shape[0]} predictor rows but {y.shape[0]} responses")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("non-finite entries in regression problem")
        object.__setattr__(self, "predictors", X)
        object.__setattr__(self, "response", y)
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float).ravel()
            if w.shape != y.shape:
                raise ValueError("weights must match the number of rows")
            if not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise ValueError("weights must be finite and strictly positive")
            object.__setattr__(self, "weights", w)

    @property
    def shape(self):
        return self.predictors.shape


@dataclass
class FitResult:
    coefficients: np.ndarray
    objective: float
    method: str
    residuals: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def check_loss(u, tau=0.5):
    """Quantile check loss u * (tau - 1[u < 0])."""
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    u = np.asarray(u, dtype=float)
    out = u * (tau - (u < 0))
    return out if out.ndim else float(out)


def lad_objective(X, y, beta, tau=0.5):
    return float(np.sum(check_loss(y - X @ beta, tau)))


def _lstsq_qr(X, y):
    """Least squares through a pivoted QR; RankDeficient names dependent columns."""
    n, p = X.shape
    if n < p:
        raise RankDeficient(f"{n} rows for {p} columns", columns=range(n, p))
    Q, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(n, p) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    rank = int(np.sum(diag > tol))
    if rank < p:
        dependent = sorted(int(j) for j in piv[rank:])
        raise RankDeficient(f"design has rank {rank} < {p}; dependent columns {dependent}",
                            columns=dependent)
    z = scipy.linalg.solve_triangular(R, Q.T @ y)
    beta = np.empty(p)
    beta[piv] = z
    return beta


def ols_fit(problem: RegressionProblem) -> FitResult:
    X, y = problem.predictors, problem.response
    beta = _lstsq_qr(X, y)
    res = y - X @ beta
    return FitResult(beta, float(res @ res), "OLS", res)


def wls_fit(problem: RegressionProblem) -> FitResult:
    X, y = problem.predictors, problem.response
    w = problem.weights if problem.weights is not None else np.ones_like(y)
    sw = np.sqrt(w)
    beta = _lstsq_qr(X * sw[:, None], y * sw)
    res = y - X @ beta
    return FitResult(beta, float(np.sum(w * res * res)), "WLS", res)


def _vertex_polish(X, y, beta, max_rounds=100):
    """Move to an optimal vertex by single-row basis exchanges.

    Starts from the p rows with the smallest absolute residuals and accepts
    any exchange that lowers the LAD objective. Returns (beta, objective,
    certified) where ``certified`` means no exchange could improve.
    """
    n, p = X.shape
    order = np.argsort(np.abs(y - X @ beta), kind="stable")
    # greedy: repeated rows (pooled subjects) make small windows rank deficient
    basis = []
    for i in order:
        if np.linalg.matrix_rank(X[basis + [int(i)]]) == len(basis) + 1:
            basis.append(int(i))
            if len(basis) == p:
                break
    if len(basis) < p:
        return beta, lad_objective(X, y, beta), False
    cur = np.linalg.solve(X[basis], y[basis])
    cur_obj = lad_objective(X, y, cur)
    for _ in range(max_rounds):
        best = (cur_obj, None, None)
        for j in range(p):
            A = np.repeat(X[basis][None, :, :], n, axis=0)
            b = np.repeat(y[basis][None, :], n, axis=0)
            A[:, j, :] = X
            b[:, j] = y
            ok = np.abs(np.linalg.det(A)) > 1e-12 * np.prod(np.linalg.norm(A, axis=2), axis=1)
            if not np.any(ok):
                continue
            cand = np.linalg.solve(A[ok], b[ok][..., None])[..., 0]
            objs = 0.5 * np.abs(y[None, :] - cand @ X.T).sum(axis=1)
            i = int(np.argmin(objs))
            if objs[i] < best[0] - 1e-12 * (1.0 + abs(best[0])):
                best = (objs[i], j, int(np.nonzero(ok)[0][i]))
        if best[1] is None:
            return cur, cur_obj, True
        basis[best[1]] = best[2]
        cur = np.linalg.solve(X[basis], y[basis])
        cur_obj = lad_objective(X, y, cur)
    return cur, cur_obj, False


def median_fit(problem: RegressionProblem, eps_start=1e-2, eps_end=1e-10,
               max_iter=500, tol=1e-10, polish=True) -> FitResult:
    """LAD regression by IRLS on the smoothed loss sqrt(u^2 + eps^2).

    eps shrinks geometrically from ``eps_start`` to ``eps_end`` (relative to
    the response scale), warm-started at the OLS solution. The IRLS iterate
    is then moved to an optimal vertex by basis exchange.
    """
    X, y = problem.predictors, problem.response
    n, p = X.shape
    beta = ols_fit(problem).coefficients
    scale = float(np.mean(np.abs(y))) or 1.0
    n_stages = max(1, int(round(np.log10(eps_start / eps_end))))
    eps_levels = scale * np.geomspace(eps_start, eps_end, n_stages + 1)
    it = 0
    converged = False
    step = np.inf
    for eps in eps_levels:
        converged = False
        while it < max_iter:
            it += 1
            res = y - X @ beta
            sw = 1.0 / np.sqrt(np.sqrt(res * res + eps * eps))
            try:
                new = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)[0]
            except np.linalg.LinAlgError:
                break
            step = float(np.max(np.abs(new - beta)))
            beta = new
            if step < tol * (1.0 + float(np.max(np.abs(beta)))):
                converged = True
                break
        if it >= max_iter:
            break
    certified = False
    objective = lad_objective(X, y, beta)
    if polish and n >= p:
        beta, objective, certified = _vertex_polish(X, y, beta)
    if not (converged or certified):
        raise NonConvergence(f"IRLS hit {max_iter} iterations (last step {step:.3g})",
                             coefficients=beta, objective=objective, gap=step)
    res = y - X @ beta
    return FitResult(beta, objective, "QR", res,
                     {"iterations": it, "irls_converged": converged, "vertex_certified": certified})


def lad_oracle(problem: RegressionProblem) -> FitResult:
    """Exact LAD by enumerating every interpolating p-row subset."""
    X, y = problem.predictors, problem.response
    n, p = X.shape
    if n > ORACLE_MAX_ROWS or p > ORACLE_MAX_COLS:
        raise TooLarge(f"oracle limited to {ORACLE_MAX_ROWS} rows x {ORACLE_MAX_COLS} columns, got {n}x{p}")
    best = None
    candidates = []
    for combo in itertools.combinations(range(n), p):
        A = X[list(combo)]
        if np.linalg.matrix_rank(A) < p:
            continue
        beta = np.linalg.solve(A, y[list(combo)])
        candidates.append((lad_objective(X, y, beta), tuple(beta)))
    if not candidates:
        raise RankDeficient("no non-singular row subset")
    obj_min = min(c[0] for c in candidates)
    ties = [c for c in candidates if c[0] <= obj_min + 1e-9 * (1.0 + abs(obj_min))]
    best = min(ties, key=lambda c: (c[0], c[1]))
    beta = np.array(best[1])
    n_distinct = len({tuple(np.round(c[1], 9)) for c in ties})
    return FitResult(beta, best[0], "QR", y - X @ beta,
                     {"n_minimizers": n_distinct, "subsets": len(candidates)})
