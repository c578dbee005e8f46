"""Counts tables, division event logs and their aggregation into count series.

Both formats are comma-separated UTF-8 text with a mandatory header row and
times in hours.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import NegativeCount, ParseError, SchemaError
from .simulator import Cohort, Subject

COUNT_COLUMNS = ("subject_id", "t", "stem_count", "diff_count")
EVENT_COLUMNS = ("cell_id", "generation", "time_first_observed", "time_last_observed", "outcome")


class Outcome(enum.Enum):
    SYM_RENEW = "SYM_RENEW"
    ASYM_RENEW = "ASYM_RENEW"
    DIFF = "DIFF"
    NONE = "NONE"


# (change in stem-like count, change in differentiated count)
_INCREMENTS = {
    Outcome.SYM_RENEW: (1, 0),
    Outcome.ASYM_RENEW: (0, 1),
    Outcome.DIFF: (-1, 2),
}


@dataclass(frozen=True)
class CellRecord:
    cell_id: str
    generation: int
    time_first_observed: float
    time_last_observed: float
    outcome: Outcome

    def division_time(self, timing="last"):
        if timing == "last":
            return self.time_last_observed
        return 0.5 * (self.time_first_observed + self.time_last_observed)


class CountSeries(NamedTuple):
    """State after each event, starting with the initial state at t=0."""

    t: np.ndarray
    stem: np.ndarray
    diff: np.ndarray


def _reader(fh, path, required):
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError(f"{path}: missing header row") from None
    header = [h.strip() for h in header]
    missing = [c for c in required if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}")
    index = {c: header.index(c) for c in required}
    for row in reader:
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"{path}: expected {len(header)} fields, got {len(row)}",
                             line=reader.line_num)
        yield reader.line_num, {c: row[i].strip() for c, i in index.items()}


def _number(text, kind, path, line, column):
    try:
        value = kind(text)
    except ValueError:
        raise ParseError(f"{path}: bad {column} value {text!r}", line=line) from None
    if kind is float and not np.isfinite(value):
        raise ParseError(f"{path}: non-finite {column}", line=line)
    return value


def read_counts(path) -> Cohort:
    """Read a counts table; subjects keep their first-appearance order."""
    path = Path(path)
    groups: dict[str, list] = {}
    seen = set()
    with path.open(newline="", encoding="utf-8") as fh:
        for line, rec in _reader(fh, path, COUNT_COLUMNS):
            sid = rec["subject_id"]
            t = _number(rec["t"], float, path, line, "t")
            stem = _number(rec["stem_count"], int, path, line, "stem_count")
            diff = _number(rec["diff_count"], int, path, line, "diff_count")
            if t < 0 or stem < 0 or diff < 0:
                raise SchemaError(f"{path}:{line}: times and counts must be non-negative")
            if (sid, t) in seen:
                raise SchemaError(f"{path}:{line}: duplicate row for subject {sid!r} at t={t!r}")
            seen.add((sid, t))
            groups.setdefault(sid, []).append((t, stem, diff))
    subjects = []
    for sid, rows in groups.items():
        rows.sort()
        t, stem, diff = (np.array(col) for col in zip(*rows))
        subjects.append(Subject(sid, t.astype(float), stem.astype(np.int64), diff.astype(np.int64)))
    return Cohort(subjects)


def _as_count(value, what):
    if float(value) != int(value) or value < 0:
        raise SchemaError(f"{what} must be a non-negative integer, got {value!r}")
    return int(value)


def write_counts(cohort: Cohort, path):
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COUNT_COLUMNS)
        for subj in cohort.subjects:
            for t, s, f in zip(subj.t, subj.S_star, subj.F):
                w.writerow([subj.id, repr(float(t)), _as_count(s, "stem_count"),
                            _as_count(f, "diff_count")])


def read_event_log(path) -> list[CellRecord]:
    path = Path(path)
    records = []
    with path.open(newline="", encoding="utf-8") as fh:
        for line, rec in _reader(fh, path, EVENT_COLUMNS):
            gen = _number(rec["generation"], int, path, line, "generation")
            t0 = _number(rec["time_first_observed"], float, path, line, "time_first_observed")
            t1 = _number(rec["time_last_observed"], float, path, line, "time_last_observed")
            try:
                outcome = Outcome(rec["outcome"].upper())
            except ValueError:
                raise ParseError(f"{path}: unknown outcome {rec['outcome']!r}", line=line) from None
            if gen < 1:
                raise SchemaError(f"{path}:{line}: generation must be >= 1")
            if t1 < t0:
                raise SchemaError(f"{path}:{line}: time_last_observed precedes time_first_observed")
            records.append(CellRecord(rec["cell_id"], gen, t0, t1, outcome))
    return records


def write_event_log(records, path):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_COLUMNS)
        for r in records:
            w.writerow([r.cell_id, r.generation, repr(float(r.time_first_observed)),
                        repr(float(r.time_last_observed)), r.outcome.value])


def starting_count(records):
    """Number of generation-1 cells."""
    return sum(1 for r in records if r.generation == 1)


def aggregate_events(records, start_count, timing="last") -> CountSeries:
    """Apply division outcomes in time order to ``start_count`` initial cells.

    Symmetric renewal adds a stem-like cell, asymmetric renewal adds a
    differentiated cell, differentiation trades one stem-like cell for two
    differentiated cells. Cells with outcome NONE never divided.
    Simultaneous events keep their file order.
    """
    if int(start_count) != start_count or start_count < 1:
        raise ValueError("start_count must be a positive integer")
    if timing not in ("last", "midpoint"):
        raise ValueError("timing must be 'last' or 'midpoint'")
    events = [(r.division_time(timing), i, r) for i, r in enumerate(records)
              if r.outcome is not Outcome.NONE]
    events.sort(key=lambda e: (e[0], e[1]))
    t = [0.0]
    stem = [int(start_count)]
    diff = [0]
    for when, _, rec in events:
        ds, df = _INCREMENTS[rec.outcome]
        if stem[-1] + ds < 0:
            raise NegativeCount(f"cell {rec.cell_id!r} differentiates at t={when} "
                                "with no stem-like cells left")
        t.append(float(when))
        stem.append(stem[-1] + ds)
        diff.append(diff[-1] + df)
    return CountSeries(np.array(t), np.array(stem, dtype=np.int64), np.array(diff, dtype=np.int64))


def series_from_subject(subject: Subject) -> CountSeries:
    return CountSeries(np.asarray(subject.t, float), np.asarray(subject.S_star, np.int64),
                       np.asarray(subject.F, np.int64))


def subsample(series: CountSeries, interval, subject_id="0") -> Cohort:
    """State at every multiple of ``interval`` within the span of the series."""
    if not interval > 0:
        raise ValueError("interval must be > 0")
    t = np.asarray(series.t, dtype=float)
    # tolerance keeps exact multiples such as 140/20 on the grid
    k0 = np.ceil(t[0] / interval - 1e-9)
    k1 = np.floor(t[-1] / interval + 1e-9)
    grid = np.arange(k0, k1 + 1) * interval + 0.0  # no -0.0
    idx = np.searchsorted(t, grid, side="right") - 1
    subject = Subject(str(subject_id), grid, np.asarray(series.stem)[idx].astype(np.int64),
                      np.asarray(series.diff)[idx].astype(np.int64))
    return Cohort([subject])
