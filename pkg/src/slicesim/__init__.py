"""Slotted-time simulator of network-slice admission and congestion control."""

from .env import Action, ContractViolation, RewardParams, Scenario, SliceEnv, run_episode
from .metrics import EpisodeMetrics, aggregate, write_csv
from .model import (
    ConfigurationError,
    NetworkSliceInstance,
    NotFoundError,
    ResourcePool,
    ResourceVector,
    SliceClass,
    SliceRequest,
    SliceTypeSpec,
    fits,
    utilization,
)

__version__ = "0.1.0"

__all__ = [
    "Action",
    "ConfigurationError",
    "ContractViolation",
    "EpisodeMetrics",
    "NetworkSliceInstance",
    "NotFoundError",
    "ResourcePool",
    "ResourceVector",
    "RewardParams",
    "Scenario",
    "SliceClass",
    "SliceEnv",
    "SliceRequest",
    "SliceTypeSpec",
    "aggregate",
    "fits",
    "run_episode",
    "utilization",
    "write_csv",
]
