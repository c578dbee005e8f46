"""Observed-to-predicted count ratios used to judge a fit."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MissingPrediction

OFFSET = 0.5


@dataclass(frozen=True)
class RatioSummary:
    """Medians of (0.5 + observed) / (0.5 + predicted).

    ``per_point_ratios`` rows are (subject, t, kind, ratio) with kind "F" or
    "S". ``s_viable`` uses the hidden viable count instead of S* and is only
    set for simulated cohorts. Medians of an even number of ratios average
    the two central values.
    """

    f_hat: float
    s_hat: float
    per_point_ratios: list
    s_viable: float | None = None


def _lookup(predictions):
    """Map time -> (S*_hat, F_hat) from rows (t, S*_hat, F_hat) or a dict."""
    if isinstance(predictions, dict):
        return {float(t): tuple(v) for t, v in predictions.items()}
    arr = np.asarray(predictions, dtype=float)
    return {float(row[0]): (float(row[1]), float(row[2])) for row in arr}


def ratio_metrics(cohort, predictions) -> RatioSummary:
    table = _lookup(predictions)
    rows = []
    f_r, s_r, v_r = [], [], []
    for subj in cohort.subjects:
        for j, t in enumerate(np.asarray(subj.t, dtype=float)):
            try:
                s_pred, f_pred = table[float(t)]
            except KeyError:
                raise MissingPrediction(subj.id, float(t)) from None
            fr = (OFFSET + float(subj.F[j])) / (OFFSET + f_pred)
            sr = (OFFSET + float(subj.S_star[j])) / (OFFSET + s_pred)
            rows.append((subj.id, float(t), "F", fr))
            rows.append((subj.id, float(t), "S", sr))
            f_r.append(fr)
            s_r.append(sr)
            if subj.S is not None:
                v_r.append((OFFSET + float(subj.S[j])) / (OFFSET + s_pred))
    if not rows:
        raise ValueError("cohort has no observations")
    s_viable = float(np.median(v_r)) if len(v_r) == len(f_r) else None
    return RatioSummary(float(np.median(f_r)), float(np.median(s_r)), rows, s_viable)
