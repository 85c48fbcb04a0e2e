"""Simulation and processing toolkit for a multi-band FR3 channel sounder."""

from .core import SounderConfig, default_config, load_config, validate_config

__all__ = ["SounderConfig", "default_config", "load_config", "validate_config"]
__version__ = "0.1.0"
