"""Exception hierarchy shared by every module in the package."""


class TrialError(Exception):
    """Base class for all errors raised by honeytrial."""


class DomainError(TrialError, ValueError):
    """Argument outside the mathematical domain of a function."""


class DegenerateIncidenceError(TrialError, ValueError):
    """Control and corrupted incidences are equal, so no sample size exists."""


class EmptyCohortError(TrialError, ValueError):
    """A survival estimate was requested for a cohort with no participants."""


class AllZeroRatesError(TrialError, ValueError):
    """Every risk rate is zero, so a weighted allocation is undefined."""


class NonPositiveBudgetError(TrialError, ValueError):
    pass


class DriverError(TrialError):
    """Environment driver misuse or contract breach."""


class DuplicateDeployError(DriverError):
    pass


class UnknownStageError(DriverError):
    pass


class SchemaViolationError(TrialError, ValueError):
    pass


class ConfigError(TrialError):
    pass


class ConfigParseError(ConfigError):
    pass


class ConfigInvariantError(ConfigError, ValueError):
    """A config value parsed fine but breaks a study invariant."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class ReportError(TrialError):
    pass


class MissingReportError(ReportError, FileNotFoundError):
    pass


class CorruptReportError(ReportError):
    pass
