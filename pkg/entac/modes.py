"""
Option constants shared by configuration, training, sweeps and the CLI.
"""

from enum import StrEnum


class InitMode(StrEnum):
    """
    Initial state distribution of a gridworld.

    START_CELL puts all mass on the bottom-left cell, so rho_min = 0 and the
    tau-dependent theory is disabled. UNIFORM spreads mass evenly.
    """

    START_CELL = "start-cell"
    UNIFORM = "uniform"


class EnvKind(StrEnum):
    GRIDWORLD = "gridworld"
    SYNTHETIC = "synthetic"
    FILE = "file"


class TauMode(StrEnum):
    """How the projection threshold of the actor step is chosen."""

    AUTO = "auto-tau-lambda"
    FIXED = "fixed"
    DISABLED = "disabled"


class CriticMode(StrEnum):
    """
    LEARNED runs H TD steps per actor step. EXACT_ORACLE replaces the critic
    with the exact regularized Q-function of the current policy.
    """

    LEARNED = "learned"
    EXACT_ORACLE = "exact-oracle"


class Sampler(StrEnum):
    """
    Source of (s, a) pairs distributed as occupancy x policy.

    Usage:
        >>> Sampler("rollout")  # Sampler.ROLLOUT
    """

    OCCUPANCY = "occupancy"
    ROLLOUT = "rollout"


class CheckSuite(StrEnum):
    GRADIENTS = "gradients"
    VARIANCE = "variance"
    CONTRACTION = "contraction"
    PROJECTION = "projection"
    AUX = "aux"
    ALL = "all"


class OutputFormat(StrEnum):
    JSON = "json"
    TEXT = "text"
