"""Standard coding trees used in tests, docs and the acceptance suite."""

from __future__ import annotations

import math

from .curves import Curve
from .mapcore import MapSpec
from .tree import CodingTree


def z2_map() -> MapSpec:
    return MapSpec.polynomial([0, 0, 1], name="z^2")


def z2m1_map() -> MapSpec:
    return MapSpec.polynomial([-1, 0, 1], name="z^2-1")


def z2_tree(**kw) -> CodingTree:
    """Root 4; gamma^1 the segment to 2, gamma^2 the upper half-circle to -2."""
    return CodingTree(
        z2_map(), 4.0, [Curve.segment(4, 2), Curve.arc(4, -2, -1.0)], **kw
    )


def z2m1_tree(**kw) -> CodingTree:
    """Root 4 for ``z^2 - 1``; preimages are ``+-sqrt(5)``."""
    r = math.sqrt(5)
    return CodingTree(
        z2m1_map(), 4.0, [Curve.segment(4, r), Curve.arc(4, -r, -1.0)], **kw
    )


def linear_tree(lam: complex = 2.0, root: complex = 1.0, **kw) -> CodingTree:
    """Degree-one tree for ``lam * z``: ``gamma^1`` runs from ``root`` to ``root / lam``."""
    m = MapSpec.polynomial([0, lam], name=f"{lam}z")
    return CodingTree(m, root, [Curve.segment(root, root / lam)], **kw)


TREES = {"z2": z2_tree, "z2-1": z2m1_tree}
