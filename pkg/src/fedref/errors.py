"""Exception hierarchy shared across the package."""


class FedRefError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(FedRefError, ValueError):
    """Two parameter vectors (or a vector and a model) disagree on size."""


class UsageError(FedRefError, ValueError):
    """A call violated a documented precondition (empty input, bad range)."""


class IngestionError(FedRefError, ValueError):
    """A data file could not be turned into a dataset."""


class ConfigError(FedRefError, ValueError):
    """An experiment or scenario config failed validation."""
