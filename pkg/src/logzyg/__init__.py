"""Numerical verification of energy estimates with derivative loss for wave
operators whose principal coefficient is log-Zygmund in time and
log-Lipschitz in space."""

from .config import ExperimentConfig, load_config
from .grid import PeriodicGrid

__all__ = ["ExperimentConfig", "PeriodicGrid", "load_config"]
