"""Command-line front end."""

from .config import ConfigError, ExperimentConfig, Task, parse_config
from .tasks import physical_units_report, rate_error_map, run_task

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "Task",
    "parse_config",
    "physical_units_report",
    "rate_error_map",
    "run_task",
]
