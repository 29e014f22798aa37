"""Pulling closed curves back along orbits, in coordinates centred on the orbit.

Disks shrink geometrically under pullback along a repelling orbit, so after
a few dozen steps they are far below the spacing of doubles near the orbit
point.  Every step here therefore works with offsets ``z - y`` from the
current orbit point ``y``, using the recentred map
``g(e) = f(y + e) - f(y)`` whose preimages of small targets are small and
are resolved to full relative precision by the Newton polish.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial

from .curves import (
    DEFAULT_CLEARANCE,
    CriticalValueProximity,
    Curve,
    LiftError,
    _lift_core,
    distance_to_points,
    lift_curve,
)
from .mapcore import MapSpec, critical_values, derivative_array, preimages


class ComponentTraceFailure(RuntimeError):
    pass


def local_map(m: MapSpec, y: complex, w: complex) -> MapSpec:
    """``e -> f(y + e) - w`` as a ``MapSpec`` (``w`` is the next orbit point)."""
    shift = Polynomial([complex(y), 1.0])
    p = Polynomial(m.p)(shift).coef.astype(complex)
    q = Polynomial(m.q)(shift).coef.astype(complex)
    num = np.zeros(max(len(p), len(q)), dtype=complex)
    num[: len(p)] += p
    num[: len(q)] -= complex(w) * q
    return MapSpec(tuple(num), tuple(q))


def winding_number(poly: np.ndarray, point: complex = 0.0) -> int:
    """Winding number of the closed polygon ``poly`` (last vertex joins the first)."""
    v = np.asarray(poly, dtype=complex) - point
    if np.any(v == 0):
        return 0
    ratios = np.concatenate([v[1:], v[:1]]) / v
    return int(round(float(np.sum(np.angle(ratios))) / (2 * math.pi)))


def circle_points(radius: float, n: int = 64) -> np.ndarray:
    return radius * np.exp(2j * math.pi * np.arange(n) / n)


def _lift_closed(
    g: MapSpec,
    poly: np.ndarray,
    clearance: float,
    cvals: list,
) -> np.ndarray:
    """Boundary of the component of ``g^{-1}(inside poly)`` that contains 0."""
    curve = Curve.from_points(np.append(poly, poly[0]))
    scale = float(np.max(np.abs(poly)))
    starts = sorted(
        (p.point for p in preimages(g, poly[0]) if np.isfinite(p.point)),
        key=lambda z: abs(z),
    )
    for s in starts:
        pieces, cur = [], s
        closed = False
        for _ in range(g.degree):
            c = lift_curve(g, curve, cur, clearance, math.inf, _cvals=cvals)
            pieces.append(c.z[:-1])
            cur = complex(c.end)
            if abs(cur - s) <= 1e-9 * max(abs(s), 1e-300) + 1e-12 * scale:
                closed = True
                break
        if not closed:
            continue
        comp = np.concatenate(pieces)
        if winding_number(comp, 0.0) != 0:
            return comp
    raise ComponentTraceFailure("no lifted boundary encloses the orbit point")


@dataclass
class PullbackStep:
    level: int
    offsets: np.ndarray  # boundary polygon relative to the orbit point
    center: complex

    @property
    def sup_distance(self) -> float:
        return float(np.max(np.abs(self.offsets)))

    @property
    def diameter(self) -> float:
        z = self.offsets
        if len(z) > 512:
            z = z[:: int(math.ceil(len(z) / 512))]
        return float(np.max(np.abs(z[:, None] - z[None, :])))

    def absolute(self) -> np.ndarray:
        return self.center + self.offsets


def pull_back_once(
    m: MapSpec,
    offsets: np.ndarray,
    y_from: complex,
    y_to: complex,
    clearance: float = DEFAULT_CLEARANCE,
) -> np.ndarray:
    """Pull a polygon around ``y_to`` back to the component around ``y_from``.

    ``offsets`` are taken relative to ``y_to``; the result is relative to
    ``y_from`` (which should satisfy ``f(y_from) ~ y_to``).
    """
    g = local_map(m, y_from, y_to)
    cvals = critical_values(g)
    try:
        return _lift_closed(g, np.asarray(offsets, dtype=complex), clearance, cvals)
    except CriticalValueProximity as exc:
        raise ComponentTraceFailure(f"boundary meets a critical value ({exc})") from exc
    except LiftError as exc:
        raise ComponentTraceFailure(str(exc)) from exc


def pull_back_many(
    m: MapSpec,
    polygons: list,
    y_from: complex,
    y_to: complex,
    clearance: float = DEFAULT_CLEARANCE,
) -> list:
    """Batched :func:`pull_back_once` for several polygons around the same orbit step.

    Entries of the result are offset arrays, or the raised
    :class:`ComponentTraceFailure` for polygons that could not be traced.
    """
    g = local_map(m, y_from, y_to)
    cvals = critical_values(g)
    out: list = [None] * len(polygons)
    groups: dict[int, list[int]] = {}
    for i, poly in enumerate(polygons):
        if cvals and distance_to_points(np.append(poly, poly[0]), cvals)[0] < clearance:
            out[i] = ComponentTraceFailure("boundary meets a critical value")
            continue
        groups.setdefault(len(poly), []).append(i)
    for _, idxs in groups.items():
        closed = np.stack([np.append(polygons[i], polygons[i][0]) for i in idxs])
        starts = []
        for i in idxs:
            pre = [p.point for p in preimages(g, polygons[i][0]) if np.isfinite(p.point)]
            starts.append(min(pre, key=abs))
        lifted, fail = _lift_core(g, closed, np.array(starts), math.inf)
        for row, i in enumerate(idxs):
            z = lifted[row]
            scale = float(np.max(np.abs(polygons[i])))
            s0 = starts[row]
            if (
                fail[row] < 0
                and abs(z[-1] - s0) <= 1e-9 * max(abs(s0), 1e-300) + 1e-12 * scale
                and winding_number(z[:-1], 0.0) != 0
            ):
                out[i] = z[:-1]
                continue
            try:
                out[i] = _lift_closed(g, polygons[i], clearance, cvals)
            except (CriticalValueProximity, LiftError, ComponentTraceFailure) as exc:
                out[i] = exc if isinstance(exc, ComponentTraceFailure) else ComponentTraceFailure(str(exc))
    return out


def log_derivative_along(m: MapSpec, points: np.ndarray) -> np.ndarray:
    """``log|f'|`` at the given points (used for inverse-branch derivative products)."""
    with np.errstate(divide="ignore"):
        return np.log(np.abs(derivative_array(m, np.asarray(points, dtype=complex))))
