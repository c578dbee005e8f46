"""Exception and warning types raised across the package."""


class StemProlifError(Exception):
    """Base class for all package errors."""


class DomainError(StemProlifError, ValueError):
    """The proliferation polynomial is non-positive where it must be evaluated."""


class RangeWarning(UserWarning):
    """q(t) evaluated outside [0, 2]; the value is returned unclipped."""


class InvalidConfig(StemProlifError, ValueError):
    pass


class NoViableCells(StemProlifError):
    pass


class StepSizeError(StemProlifError):
    pass


class RankDeficient(StemProlifError, ValueError):
    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


class NonConvergence(StemProlifError):
    def __init__(self, message, coefficients=None, objective=None, gap=None):
        super().__init__(message)
        self.coefficients = coefficients
        self.objective = objective
        self.gap = gap


class TooLarge(StemProlifError, ValueError):
    pass


class InsufficientData(StemProlifError, ValueError):
    pass


class DegenerateDesign(StemProlifError, ValueError):
    pass


class NegativeEstimate(UserWarning):
    """Backward reconstruction crossed zero; the estimate was clamped."""


class AllDropped(StemProlifError, ValueError):
    pass


class InsufficientPoints(StemProlifError, ValueError):
    pass


class DegenerateFit(StemProlifError, ValueError):
    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class MissingPrediction(StemProlifError, KeyError):
    def __init__(self, subject, t):
        super().__init__(f"no prediction for subject {subject!r} at t={t!r}")
        self.subject = subject
        self.t = t

    def __str__(self):
        return self.args[0]


class ParseError(StemProlifError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class SchemaError(StemProlifError, ValueError):
    pass


class NegativeCount(StemProlifError, ValueError):
    pass


class PipelineError(StemProlifError):
    """Wraps the first failing estimation stage."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
