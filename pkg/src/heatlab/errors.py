"""Exception types shared across the package."""


class HeatLabError(Exception):
    pass


class DomainError(HeatLabError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class DivergenceError(DomainError):
    """The requested integral diverges for these parameters."""


class RangeError(DomainError):
    """A target value lies outside the range of the function being inverted."""


class GridTooSmallError(HeatLabError):
    """The spatial grid cannot hold the requested kernel to tolerance."""


class ConfigurationError(HeatLabError):
    """Inconsistent run configuration (mode/grid/parameter mismatch)."""


class BlowUpError(HeatLabError):
    """A field value became non-finite during time stepping."""

    def __init__(self, step_index: int, t: float):
        self.step_index = step_index
        self.t = t
        super().__init__(f"non-finite field value at step {step_index} (t={t:g})")
