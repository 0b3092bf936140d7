"""Last-passage percolation and directed-polymer simulation toolkit.

Modules
-------
lattice      points, directed graphs, level sets, embedding, reflections
randomness   distribution specs, counter-based seeding, clamp ratios
passage      dynamic-programming passage times, geodesics, ground states
couplings    randomized start, phi coupling, reflection coupling
estimators   Monte Carlo statistics, scaling fits, influences, tails
cli          declarative experiment runner
"""
from .errors import (
    BoxError,
    ConfigError,
    DegenerateWindow,
    DimensionMismatch,
    LimitExceeded,
    LppError,
    Unreachable,
)
from .lattice import GraphKind, LatticePoint
from .passage import WeightField, geodesic, ground_state, last_passage_time
from .randomness import DistributionSpec, SeedContext

__version__ = "0.1.0"

__all__ = [
    "BoxError", "ConfigError", "DegenerateWindow", "DimensionMismatch", "LimitExceeded",
    "LppError", "Unreachable", "GraphKind", "LatticePoint", "WeightField", "geodesic",
    "ground_state", "last_passage_time", "DistributionSpec", "SeedContext",
]
