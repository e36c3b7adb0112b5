"""Batched tile-level generation environments with an RL trainer,
benchmarks, and a mixed-initiative design server."""

from .env import BatchEnv, EnvConfig, EnvState
from .grid import Pinpoint, Shape, TileGrid
from .pathfind import UNREACHABLE
from .problems import MetricVector
from .tiles import BINARY, DOMAINS, DUNGEON, MAZE, Domain, get_domain

__version__ = "0.1.0"

__all__ = [
    "BatchEnv",
    "EnvConfig",
    "EnvState",
    "Pinpoint",
    "Shape",
    "TileGrid",
    "UNREACHABLE",
    "MetricVector",
    "BINARY",
    "MAZE",
    "DUNGEON",
    "DOMAINS",
    "Domain",
    "get_domain",
    "__version__",
]
