"""Command-line interface: simulate, estimate, sweep, ingest, version.

Exit codes: 0 success, 1 runtime or estimation failure, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from ._accel import backend
from .errors import InvalidConfig, StemProlifError
from .estimation import EulerConfig, PipelineOptions, run_pipeline
from .io import aggregate_events, read_counts, read_event_log, starting_count, subsample, write_counts
from .model import ProbGenConfig, ProliferationCoeffs
from .simulator import HORIZON_FRAC, SimConfig, default_horizon, equally_spaced_schedule, generate_cohort
from .sweep import ROW_FIELDS, SweepSpec, run_sweep

log = logging.getLogger("stemprolif")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class ConfigError(InvalidConfig):
    """A config document failed validation; the message names the field path."""


def _load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return doc


def _field(doc, name, kind, default=None, required=False, prefix="config"):
    if name not in doc:
        if required:
            raise ConfigError(f"{prefix}.{name}: required field missing")
        return default
    value = doc[name]
    if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if kind is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if kind is bool and isinstance(value, bool):
        return value
    if kind is list and isinstance(value, list):
        return value
    raise ConfigError(f"{prefix}.{name}: expected {kind.__name__}, got {value!r}")


def _numbers(values, path):
    out = []
    for i, v in enumerate(values):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{path}[{i}]: expected a number, got {v!r}")
        out.append(v)
    return out


def _coeffs(value, path):
    if not isinstance(value, list) or not 1 <= len(value) <= 3:
        raise ConfigError(f"{path}: expected a list of 1 to 3 numbers")
    return ProliferationCoeffs(*map(float, _numbers(value, path)))


SIM_FIELDS = {"S0", "r", "coeffs", "k", "s", "n_subjects", "T", "horizon", "horizon_frac",
              "schedule", "seed", "clip_q", "max_events"}


def sim_config_from_doc(doc, seed=None, k=None):
    """Build (SimConfig, schedule, n_subjects) from a simulate config document."""
    unknown = sorted(set(doc) - SIM_FIELDS)
    if unknown:
        raise ConfigError(f"config.{unknown[0]}: unknown field")
    coeffs = _coeffs(_field(doc, "coeffs", list, required=True), "config.coeffs")
    r = _field(doc, "r", float, required=True)
    S0 = _field(doc, "S0", int, required=True)
    k = _field(doc, "k", float, 3.0) if k is None else float(k)
    s = _field(doc, "s", float, 0.0)
    seed = _field(doc, "seed", int, 0) if seed is None else seed
    clip_q = _field(doc, "clip_q", bool, False)
    n_subjects = _field(doc, "n_subjects", int, 1)
    if n_subjects < 1:
        raise ConfigError("config.n_subjects: must be >= 1")
    schedule = _field(doc, "schedule", list)
    try:
        probgen = ProbGenConfig(k=k, s=s)
    except InvalidConfig as exc:
        raise ConfigError(f"config.k/config.s: {exc}") from None
    if schedule is not None:
        schedule = np.asarray(_numbers(schedule, "config.schedule"), dtype=float)
        horizon = float(schedule[-1]) if schedule.size else 0.0
    else:
        T = _field(doc, "T", int, required=True)
        if T < 2:
            raise ConfigError("config.T: must be >= 2")
        horizon = _field(doc, "horizon", float)
        if horizon is None:
            frac = _field(doc, "horizon_frac", float, HORIZON_FRAC)
            if not r > 0:
                raise ConfigError("config.r: must be > 0")
            horizon, _ = default_horizon(coeffs, r, S0, frac=frac, clip=clip_q)
        schedule = equally_spaced_schedule(horizon, T) if horizon > 0 else None
        if schedule is None:
            raise ConfigError("config.horizon: must be > 0")
    kwargs = {}
    if "max_events" in doc:
        kwargs["max_events"] = _field(doc, "max_events", int)
    try:
        cfg = SimConfig(S0=S0, r=r, coeffs=coeffs, probgen=probgen, horizon=horizon,
                        seed=seed, clip_q=clip_q, **kwargs)
    except InvalidConfig as exc:
        raise ConfigError(f"config: {exc}") from None
    return cfg, schedule, n_subjects


def _sidecar(path, payload):
    payload = dict(payload, version=__version__, backend=backend(),
                   created=datetime.now(timezone.utc).isoformat(timespec="seconds"))
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _with_suffix(out, suffix):
    out = Path(out)
    return out.with_name(out.stem + suffix)


def cmd_simulate(args):
    cfg, schedule, n_subjects = sim_config_from_doc(_load_json(args.config), args.seed, args.k)
    cohort = generate_cohort(cfg, schedule, n_subjects, cfg.seed)
    write_counts(cohort, args.out)
    _sidecar(_with_suffix(args.out, ".meta.json"), {"command": "simulate", **cohort.metadata})
    log.info("wrote %d subjects x %d times to %s", n_subjects, len(schedule), args.out)
    return EXIT_OK


def _options(args):
    return PipelineOptions(method=args.method.upper(), euler=EulerConfig(K=args.euler_k),
                           time_assignment=args.time_assignment)


def cmd_estimate(args):
    cohort = read_counts(args.cohort)
    if not cohort.subjects:
        raise ConfigError(f"{args.cohort}: no data rows")
    report = run_pipeline(cohort, _options(args))
    out = Path(args.out)
    out.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    table = _with_suffix(out, ".trajectory.csv")
    with table.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "S_star_hat", "F_hat", "S_star_obs_median", "F_obs_median"])
        for t, s_hat, f_hat in report.predicted:
            s_obs = [float(s.S_star[i]) for s in cohort.subjects for i in np.nonzero(s.t == t)[0]]
            f_obs = [float(s.F[i]) for s in cohort.subjects for i in np.nonzero(s.t == t)[0]]
            w.writerow([repr(float(t)), repr(float(s_hat)), repr(float(f_hat)),
                        repr(float(np.median(s_obs))), repr(float(np.median(f_obs)))])
    c = report.coeffs_hat
    print(f"r_hat={report.r_hat:.6g} S0_hat={report.S0_hat:.6g} "
          f"coeffs=({c.a0:.6g}, {c.a1:.6g}, {c.a2:.6g}) method={report.method}")
    return EXIT_OK


SWEEP_LISTS = ("n", "r", "T", "S0", "s", "coeffs")
SWEEP_SCALARS = {"k": float, "replicates": int, "base_seed": int, "horizon_frac": float,
                 "horizon": float, "clip_q": bool}


def sweep_spec_from_doc(doc, args):
    unknown = sorted(set(doc) - set(SWEEP_LISTS) - set(SWEEP_SCALARS))
    if unknown:
        raise ConfigError(f"spec.{unknown[0]}: unknown field")
    kwargs = {}
    for name in SWEEP_LISTS:
        if name in doc:
            values = _field(doc, name, list, prefix="spec")
            if name == "coeffs":
                values = [_coeffs(v, f"spec.coeffs[{i}]").as_tuple() for i, v in enumerate(values)]
            else:
                values = _numbers(values, f"spec.{name}")
            kwargs[name] = tuple(values)
    for name, kind in SWEEP_SCALARS.items():
        if name in doc:
            kwargs[name] = _field(doc, name, kind, prefix="spec")
    if args.seed is not None:
        kwargs["base_seed"] = args.seed
    if args.k is not None:
        kwargs["k"] = args.k
    kwargs.update(method=args.method.upper(), time_assignment=args.time_assignment,
                  euler_k=args.euler_k)
    try:
        return SweepSpec(**kwargs)
    except (InvalidConfig, ValueError) as exc:
        raise ConfigError(f"spec: {exc}") from None


def _validate_cells(spec):
    """Every cell must be a valid simulation config before any work starts."""
    for i, cell in enumerate(spec.cells()):
        try:
            SimConfig(S0=int(cell["S0"]), r=float(cell["r"]), coeffs=cell["coeffs"],
                      probgen=ProbGenConfig(k=spec.k, s=float(cell["s"])))
        except (InvalidConfig, ValueError) as exc:
            raise ConfigError(f"spec cell {i}: {exc}") from None
        if int(cell["n"]) < 1 or int(cell["T"]) < 2:
            raise ConfigError(f"spec cell {i}: n must be >= 1 and T >= 2")


def cmd_sweep(args):
    spec = sweep_spec_from_doc(_load_json(args.spec), args)
    _validate_cells(spec)
    rows, failed = run_sweep(spec, workers=args.workers)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=ROW_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    _sidecar(_with_suffix(args.out, ".meta.json"), {"command": "sweep", "spec": spec.to_dict(),
                                                     "n_rows": len(rows), "n_failed": failed})
    if failed:
        log.error("%d replicate(s) failed; see the error column of %s", failed, args.out)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_ingest(args):
    if not args.interval > 0:
        raise ConfigError("--interval: must be > 0")
    records = read_event_log(args.log)
    start = args.start_count if args.start_count is not None else starting_count(records)
    if start < 1:
        raise ConfigError("--start-count: must be >= 1 (no generation-1 cells in the log)")
    series = aggregate_events(records, start, timing=args.timing)
    cohort = subsample(series, args.interval, subject_id=args.subject_id)
    write_counts(cohort, args.out)
    with _with_suffix(args.out, ".series.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "stem_count", "diff_count"])
        for t, s, f in zip(*series):
            w.writerow([repr(float(t)), int(s), int(f)])
    print(f"start_count={start} events={len(series.t) - 1} T={len(cohort.subjects[0].t)}")
    return EXIT_OK


def cmd_version(args):
    print(f"stemprolif {__version__} ({backend()})")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="stemprolif", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def estimation_flags(sp):
        sp.add_argument("--method", choices=("qr", "wls"), default="qr", type=str.lower)
        sp.add_argument("--euler-k", type=int, default=1000, metavar="K")
        sp.add_argument("--time-assignment", choices=("left", "mid"), default="mid")

    sp = sub.add_parser("simulate", help="simulate a cohort from a JSON config")
    sp.add_argument("config")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--k", type=float)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("estimate", help="fit rate, S(0) and q(t) to a counts table")
    sp.add_argument("cohort")
    sp.add_argument("--out", required=True)
    estimation_flags(sp)
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("sweep", help="run a configuration sweep from a JSON spec")
    sp.add_argument("spec")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--k", type=float)
    sp.add_argument("--workers", type=int, default=1)
    estimation_flags(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("ingest", help="aggregate a division event log into a counts table")
    sp.add_argument("log")
    sp.add_argument("--out", required=True)
    sp.add_argument("--interval", type=float, required=True)
    sp.add_argument("--start-count", type=int)
    sp.add_argument("--timing", choices=("last", "midpoint"), default="last")
    sp.add_argument("--subject-id", default="0")
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("version", help="print the version and kernel backend")
    sp.set_defaults(func=cmd_version)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "euler_k", 2) < 2:
        parser.error("--euler-k must be >= 2")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (StemProlifError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
