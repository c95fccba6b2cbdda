"""Supervised actor-critic learning with a pioneer network.

A fixed supervisor controller and a learned actor are blended with a
combination factor k that decays toward zero; a pioneer copy of the actor is
trained ahead of each decay so the executed behavior stays continuous.
"""
from .config import RunConfig, parse_config
from .errors import (CheckpointError, ConfigError, InvariantBreach, SdrlError, ShapeError,
                     UpdateRejected, UsageError)

__version__ = "0.1.0"

__all__ = ["RunConfig", "parse_config", "SdrlError", "ConfigError", "ShapeError",
           "UpdateRejected", "UsageError", "InvariantBreach", "CheckpointError", "__version__"]
