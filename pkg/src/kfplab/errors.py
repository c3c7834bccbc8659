class KfpError(Exception):
    """Base class for all errors raised by kfplab."""


class ConfigError(KfpError):
    """Scenario file could not be parsed or names an unknown key."""

    def __init__(self, message, key=None, line=None):
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.key = key
        self.line = line


class CFLViolation(KfpError):
    """Explicit transport step larger than the positivity bound."""


class NumericalAbort(KfpError):
    """The state became non-finite during time stepping."""

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} at step {step}")
        self.step = step


class WeightClassError(KfpError):
    """A weight function is outside the class an operation requires."""
