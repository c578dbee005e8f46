"""Stem-cell proliferation with a time-varying proliferation function.

Stochastic simulation of stem/differentiated cell counts, the closed-form
mean trajectories, and estimation of the division rate, initial stem count
and proliferation function from sparse counts.
"""
__version__ = "0.1.0"

from ._accel import backend
from .errors import (
    DegenerateFit,
    DomainError,
    InvalidConfig,
    NonConvergence,
    PipelineError,
    RangeWarning,
    StemProlifError,
)
from .estimation import EstimateReport, EulerConfig, PipelineOptions, predict, run_pipeline
from .metrics import RatioSummary, ratio_metrics
from .model import (
    DivisionKind,
    DivisionProbabilities,
    PopulationState,
    ProbGenConfig,
    ProliferationCoeffs,
    diff_trajectory,
    division_probs,
    eval_P,
    eval_q,
    integral_inv_P,
    ode_reference,
    stem_trajectory,
)
from .regression import RegressionProblem, lad_oracle, median_fit, ols_fit, wls_fit
from .simulator import (
    Cohort,
    EventLog,
    SimConfig,
    Subject,
    default_horizon,
    equally_spaced_schedule,
    generate_cohort,
    gillespie_run,
    sample_at_times,
    simulate_subject,
)
