"""Monte Carlo studies: convergence traces, collision counts and sharing
efficiency over seeded random networks."""

from .config import ALGORITHMS, KINDS, ExperimentConfig, load_config
from .runner import CSV_COLUMNS, ExperimentResult, ReplicateError, run_experiment, run_replicate

__all__ = [
    "ALGORITHMS",
    "KINDS",
    "CSV_COLUMNS",
    "ExperimentConfig",
    "ExperimentResult",
    "ReplicateError",
    "load_config",
    "run_experiment",
    "run_replicate",
]
