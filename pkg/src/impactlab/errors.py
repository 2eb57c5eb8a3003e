class ImpactLabError(Exception):
    """Base class for errors raised by impactlab."""


class InsufficientDataError(ImpactLabError, ValueError):
    pass


class DegenerateSampleError(ImpactLabError, ValueError):
    pass


class UndefinedObjectiveError(ImpactLabError, ValueError):
    """No collapse bin had enough points to contribute to the objective."""


class ParseAbortError(ImpactLabError):
    """Too many malformed rows in a tick file."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConfigError(ImpactLabError, ValueError):
    """Invalid configuration; ``field`` is the dotted path of the culprit."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class MissingDependencyError(ImpactLabError):
    """An output needed downstream was never produced."""

    def __init__(self, dependency, message=None):
        super().__init__(message or f"missing upstream output: {dependency}")
        self.dependency = dependency
