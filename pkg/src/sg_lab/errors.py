"""Exception types shared across the package."""


class SGLabError(Exception):
    """Base class for every error raised by sg_lab."""


class InvalidMatrix(SGLabError, ValueError):
    pass


class SingularMatrix(SGLabError, ArithmeticError):
    pass


class DimensionError(SGLabError, ValueError):
    pass


class DataError(SGLabError, ValueError):
    pass


class ConfigError(SGLabError, ValueError):
    """Bad configuration. ``path`` points into the offending JSON document."""

    def __init__(self, message, path=""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class InsufficientData(SGLabError, ValueError):
    pass


class InsufficientHorizon(SGLabError, ValueError):
    pass


class ContractionViolation(SGLabError, ArithmeticError):
    pass


class AnchorError(SGLabError, KeyError):
    pass


class DomainError(SGLabError, ValueError):
    pass


class DegenerateWeights(UserWarning):
    """All weights on an interval vanish; the norm bound degrades to 1."""
