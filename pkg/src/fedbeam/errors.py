"""Exception hierarchy shared by all fedbeam modules."""


class FedbeamError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(FedbeamError):
    """A config value, grid, or requested operation is structurally invalid."""


class ContractViolationError(FedbeamError):
    """A caller broke an API contract (shape mismatch, stale cache, empty input)."""


class IncompatibleWeightsError(FedbeamError):
    """A parameter vector does not match the layout the receiver expects."""


class IngestionError(FedbeamError):
    """An external file (CSV, weights file) could not be parsed or validated."""


class NumericsError(FedbeamError):
    """Training or evaluation produced a non-finite value."""
