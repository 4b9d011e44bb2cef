"""Exception hierarchy shared by every qenergy module."""


class QEnergyError(Exception):
    """Base class for all library errors."""


class DomainError(QEnergyError, ValueError):
    """An argument lies outside the domain of a formula."""


class CalibrationGapError(QEnergyError, LookupError):
    """A model parameter needed for an evaluation was never calibrated."""

    def __init__(self, message, missing=()):
        super().__init__(message)
        self.missing = tuple(missing)


class ExtrapolationError(QEnergyError, ValueError):
    """A fitted line was evaluated where it predicts a non-positive value."""


class DegenerateInputError(QEnergyError, ValueError):
    """Fitting inputs do not determine the parameters (e.g. repeated abscissae)."""


class InconsistentMeasurementError(QEnergyError, ValueError):
    """Measurements imply a physically impossible parameter (e.g. negative work)."""


class SchemaError(QEnergyError, ValueError):
    """A serialized file does not follow the expected schema."""

    def __init__(self, message, line=None, column=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line
        self.column = column


class UnknownVariantError(QEnergyError, KeyError):
    """A queue variant id was requested that is not registered."""


class DuplicateVariantError(QEnergyError, ValueError):
    """A queue variant id is registered twice."""


class HarnessError(QEnergyError, RuntimeError):
    """A benchmark run could not be carried out (thread spawn or setup failure)."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
