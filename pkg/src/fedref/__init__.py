"""Federated learning simulator with server-side reference-model fine-tuning."""

from .config import ExperimentConfig, parse_config, serialize_config
from .errors import ConfigError, DimensionError, FedRefError, IngestionError, UsageError
from .runner import RunSummary, run_experiment, select_clients

__all__ = [
    "ConfigError",
    "DimensionError",
    "ExperimentConfig",
    "FedRefError",
    "IngestionError",
    "RunSummary",
    "UsageError",
    "parse_config",
    "run_experiment",
    "select_clients",
    "serialize_config",
]
__version__ = "0.1.0"
