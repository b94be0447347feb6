"""Seeded TTI-level simulator for learning-based intra-slice user association."""

from .config import ConfigError, SimConfig, load_config
from .engine import RunPlan, RunResult, run

__all__ = ["ConfigError", "SimConfig", "load_config", "RunPlan", "RunResult", "run"]
__version__ = "0.1.0"
