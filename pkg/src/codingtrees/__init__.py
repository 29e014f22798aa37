"""Geometric coding trees, access to boundary points and external rays for rational maps."""

from .curves import Curve, lift_curve
from .mapcore import INF, MapSpec, PeriodicPoint, chordal, periodic_points, preimages
from .tree import Address, CodingTree, coding_limit, diameter_profile, n_epsilon, tree_consistency

__version__ = "0.1.0"

__all__ = [
    "INF",
    "Address",
    "CodingTree",
    "Curve",
    "MapSpec",
    "PeriodicPoint",
    "chordal",
    "coding_limit",
    "diameter_profile",
    "lift_curve",
    "n_epsilon",
    "periodic_points",
    "preimages",
    "tree_consistency",
]
