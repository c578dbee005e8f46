"""Configuration sweep: simulate, estimate and score every grid cell."""
from __future__ import annotations

import itertools
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidConfig, RangeWarning, StemProlifError
from .estimation import EulerConfig, PipelineOptions, run_pipeline
from .metrics import ratio_metrics
from .model import ProbGenConfig, ProliferationCoeffs
from .simulator import HORIZON_FRAC, SimConfig, default_horizon, equally_spaced_schedule, generate_cohort

log = logging.getLogger(__name__)

# default proliferation functions swept over
REFERENCE_COEFFS = (
    (0.8, -0.06, 0.05),
    (1.2, -0.03, 0.005),
    (1.2, -0.11, 0.005),
)

ROW_FIELDS = ("config", "replicate", "a0", "a1", "a2", "r", "T", "n", "S0", "s", "k", "horizon",
              "status", "r_hat", "S0_hat", "a0_hat", "a1_hat", "a2_hat", "f_hat", "s_hat",
              "s_viable", "error")


@dataclass(frozen=True)
class SweepSpec:
    n: tuple = (5, 25)
    r: tuple = (0.01, 0.05, 0.1, 0.2)
    T: tuple = (6, 12)
    S0: tuple = (500, 1000, 2000)
    s: tuple = (0.05, 0.01)
    coeffs: tuple = REFERENCE_COEFFS
    k: float = 3.0
    replicates: int = 60
    base_seed: int = 0
    horizon_frac: float = HORIZON_FRAC
    horizon: float | None = None
    clip_q: bool = False
    method: str = "QR"
    time_assignment: str = "mid"
    euler_k: int = 1000
    hidden_stem: str = "model"

    def __post_init__(self):
        for name in ("n", "r", "T", "S0", "s", "coeffs"):
            value = getattr(self, name)
            if isinstance(value, (int, float)):
                value = (value,)
            value = tuple(tuple(map(float, v)) if name == "coeffs" else v for v in value)
            if not value:
                raise InvalidConfig(f"{name}: list must not be empty")
            object.__setattr__(self, name, value)
        if self.replicates < 1:
            raise InvalidConfig("replicates: must be >= 1")
        if not 0 < self.horizon_frac < 1:
            raise InvalidConfig("horizon_frac: must lie in (0, 1)")
        for c in self.coeffs:
            if len(c) != 3:
                raise InvalidConfig("coeffs: each entry needs three numbers")
        self.pipeline_options()

    def cells(self):
        """Configurations in sweep order (coeffs, r, T, n, S0, s)."""
        return [dict(coeffs=c, r=r, T=T, n=n, S0=S0, s=s)
                for c, r, T, n, S0, s in itertools.product(
                    self.coeffs, self.r, self.T, self.n, self.S0, self.s)]

    def pipeline_options(self):
        return PipelineOptions(method=self.method, euler=EulerConfig(K=self.euler_k),
                               time_assignment=self.time_assignment,
                               hidden_stem=self.hidden_stem)

    def to_dict(self):
        return asdict(self)


def cell_schedule(spec: SweepSpec, cell):
    """Horizon and equally spaced schedule for one configuration."""
    if spec.horizon is not None:
        horizon, reached = float(spec.horizon), True
    else:
        horizon, reached = default_horizon(cell["coeffs"], cell["r"], cell["S0"],
                                           frac=spec.horizon_frac, clip=spec.clip_q)
    return horizon, reached, equally_spaced_schedule(horizon, int(cell["T"]))


def run_replicate(spec: SweepSpec, index, cell, replicate, horizon, schedule):
    coeffs = ProliferationCoeffs(*cell["coeffs"])
    row = dict.fromkeys(ROW_FIELDS, "")
    row.update(config=index, replicate=replicate, a0=coeffs.a0, a1=coeffs.a1, a2=coeffs.a2,
               r=cell["r"], T=cell["T"], n=cell["n"], S0=cell["S0"], s=cell["s"], k=spec.k,
               horizon=horizon)
    try:
        cfg = SimConfig(S0=int(cell["S0"]), r=float(cell["r"]), coeffs=coeffs,
                        probgen=ProbGenConfig(k=spec.k, s=float(cell["s"])), horizon=horizon,
                        seed=spec.base_seed, clip_q=spec.clip_q)
        cohort = generate_cohort(cfg, schedule, int(cell["n"]), spec.base_seed,
                                 key=(index, replicate))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RangeWarning)
            report = run_pipeline(cohort, spec.pipeline_options())
        metrics = ratio_metrics(cohort, report.predicted)
    except (StemProlifError, ValueError, ArithmeticError) as exc:
        log.warning("config %d replicate %d failed: %s", index, replicate, exc)
        row.update(status="error", error=f"{type(exc).__name__}: {exc}")
        return row
    c = report.coeffs_hat
    row.update(status="ok", r_hat=report.r_hat, S0_hat=report.S0_hat, a0_hat=c.a0,
               a1_hat=c.a1, a2_hat=c.a2, f_hat=metrics.f_hat, s_hat=metrics.s_hat,
               s_viable=metrics.s_viable if metrics.s_viable is not None else "")
    return row


def _run_cell(args):
    spec, index, cell = args
    horizon, reached, schedule = cell_schedule(spec, cell)
    if not reached:
        log.info("config %d: S* never decays to %.0f%% of peak; horizon capped at %.4g",
                 index, 100 * spec.horizon_frac, horizon)
    rows = [run_replicate(spec, index, cell, rep, horizon, schedule)
            for rep in range(spec.replicates)]
    return rows + [summarize(rows)]


def summarize(rows):
    ok = [r for r in rows if r["status"] == "ok"]
    out = dict(rows[0])
    med = {}
    for key in ("r_hat", "S0_hat", "a0_hat", "a1_hat", "a2_hat", "f_hat", "s_hat"):
        med[key] = float(np.median([r[key] for r in ok])) if ok else ""
    viable = [r["s_viable"] for r in ok if r["s_viable"] != ""]
    med["s_viable"] = float(np.median(viable)) if viable else ""
    out.update(med, replicate="median", status=f"ok={len(ok)}/{len(rows)}",
               error="" if len(ok) == len(rows) else f"{len(rows) - len(ok)} failed")
    return out


def run_sweep(spec: SweepSpec, workers=1):
    """Per-replicate rows followed by one median row per configuration.

    Output order is configuration index then replicate index whatever the
    worker count. Returns (rows, n_failed).
    """
    jobs = [(spec, i, cell) for i, cell in enumerate(spec.cells())]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(_run_cell, jobs))
    else:
        blocks = [_run_cell(job) for job in jobs]
    rows = [row for block in blocks for row in block]
    failed = sum(1 for r in rows if r["status"] == "error")
    return rows, failed
