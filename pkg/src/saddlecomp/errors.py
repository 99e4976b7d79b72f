"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands have incompatible or invalid shapes."""


class DspError(ValueError):
    """An expression or problem violates the saddle composition rules.

    Carries the diagnostics that explain the violation.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = list(diagnostics) if diagnostics else []


class ParseError(ValueError):
    """A problem file could not be parsed; carries a location string."""

    def __init__(self, message, location=None):
        super().__init__(message if location is None else f"{location}: {message}")
        self.location = location


class CapabilityError(RuntimeError):
    """The selected solver backend does not support a required cone."""


class SolverError(RuntimeError):
    """The backend failed or returned a non-optimal status."""

    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status
