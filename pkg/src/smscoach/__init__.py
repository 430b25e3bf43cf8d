"""Adaptive SMS activity coaching: context features, daily-refit linear model,
Boltzmann message selection, and a seeded cohort simulator to exercise them."""

__version__ = "0.1.0"
ENGINE_VERSION = __version__

from .config import ExperimentConfig, load_config, parse_config  # noqa: E402
from .core import DAILY_ACTIONS, MessageKind, PatientProfile, WalkSession  # noqa: E402

__all__ = [
    "DAILY_ACTIONS",
    "ENGINE_VERSION",
    "ExperimentConfig",
    "MessageKind",
    "PatientProfile",
    "WalkSession",
    "load_config",
    "parse_config",
]
