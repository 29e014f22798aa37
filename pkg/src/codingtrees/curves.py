"""Polyline curves and their lifts by inverse branches of a rational map."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .mapcore import (
    INF,
    MapSpec,
    chordal,
    chordal_array,
    critical_points,
    critical_values,
    evaluate,
    evaluate_array,
    is_inf,
    preimage_roots,
)

DEFAULT_CLEARANCE = 1e-6
DEFAULT_MAX_GAP = 0.25
START_TOL = 1e-7
MIN_DT = 1e-13


class LiftError(RuntimeError):
    pass


class CriticalValueProximity(LiftError):
    def __init__(self, t: float, distance: float, value: complex | None = None):
        self.t = float(t)
        self.distance = float(distance)
        self.value = value
        super().__init__(f"curve passes within {distance:.3g} of critical value {value} at t={t:.6g}")


class NoConvergence(LiftError):
    def __init__(self, t: float, reason: str = ""):
        self.t = float(t)
        super().__init__(f"continuation failed at t={t:.6g} {reason}".rstrip())


@dataclass(frozen=True, eq=False)
class Curve:
    """Polyline ``t -> z`` sampled at strictly increasing ``t`` in ``[0, 1]``."""

    t: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        z = np.asarray(self.z, dtype=complex)
        if t.ndim != 1 or t.shape != z.shape or len(t) == 0:
            raise ValueError("t and z must be equal-length 1-d arrays")
        if len(t) > 1 and (t[0] != 0.0 or t[-1] != 1.0 or np.any(np.diff(t) <= 0)):
            raise ValueError("parameters must increase strictly from 0 to 1")
        t.setflags(write=False)
        z.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "z", z)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def start(self) -> complex:
        return complex(self.z[0])

    @property
    def end(self) -> complex:
        return complex(self.z[-1])

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if len(self.t) == 1:
            return np.full(s.shape, self.z[0], dtype=complex)
        re = np.interp(s, self.t, self.z.real)
        im = np.interp(s, self.t, self.z.imag)
        return re + 1j * im

    def reversed(self) -> "Curve":
        return Curve((1.0 - self.t)[::-1].copy(), self.z[::-1].copy())

    def refined(self, new_t: np.ndarray) -> "Curve":
        """The same polyline resampled with the extra parameters ``new_t``."""
        t = np.union1d(self.t, np.asarray(new_t, dtype=float))
        return Curve(t, self(t))

    def max_gap(self) -> float:
        if len(self) < 2:
            return 0.0
        return float(np.max(chordal_array(self.z[:-1], self.z[1:])))

    # -- constructors -----------------------------------------------------

    @classmethod
    def point(cls, z: complex) -> "Curve":
        return cls(np.array([0.0, 1.0]), np.array([z, z], dtype=complex))

    @classmethod
    def from_points(cls, points: Sequence[complex]) -> "Curve":
        pts = np.asarray(points, dtype=complex)
        if len(pts) == 1:
            return cls.point(complex(pts[0]))
        return cls(np.linspace(0.0, 1.0, len(pts)), pts)

    @classmethod
    def segment(cls, a: complex, b: complex, n: int = 33) -> "Curve":
        s = np.linspace(0.0, 1.0, n)
        return cls(s, complex(a) + s * (complex(b) - complex(a)))

    @classmethod
    def polyline(cls, vertices: Sequence[complex], n_per_edge: int = 16) -> "Curve":
        pts = [complex(vertices[0])]
        for a, b in zip(vertices[:-1], vertices[1:]):
            s = np.linspace(0.0, 1.0, n_per_edge + 1)[1:]
            pts.extend(complex(a) + s * (complex(b) - complex(a)))
        return cls.from_points(pts)

    @classmethod
    def arc(cls, a: complex, b: complex, bulge: float = 1.0, n: int = 65) -> "Curve":
        """Circular arc from ``a`` to ``b`` on the left of ``a -> b``.

        ``bulge = 1`` gives a half circle, smaller values flatten it and a
        negative bulge puts the arc on the right.
        """
        a, b = complex(a), complex(b)
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        s = np.linspace(0.0, 1.0, n)
        pts = mid - half * np.cos(math.pi * s) + 1j * half * bulge * np.sin(math.pi * s)
        pts[0], pts[-1] = a, b
        return cls(s, pts)

    @classmethod
    def circle(cls, center: complex, radius: float, n: int = 64, phase: float = 0.0) -> "Curve":
        s = np.linspace(0.0, 1.0, n + 1)
        pts = complex(center) + radius * np.exp(1j * (phase + 2 * math.pi * s))
        pts[-1] = pts[0]
        return cls(s, pts)

    # -- serialisation ----------------------------------------------------

    def to_json(self) -> list:
        return [[float(t), float(z.real), float(z.imag)] for t, z in zip(self.t, self.z)]

    @classmethod
    def from_json(cls, data: Iterable) -> "Curve":
        rows = [tuple(r) for r in data]
        for i, r in enumerate(rows):
            if len(r) != 3:
                raise ValueError(f"curve sample {i}: expected [t, re, im], got {list(r)!r}")
        t = np.array([r[0] for r in rows], dtype=float)
        z = np.array([complex(r[1], r[2]) for r in rows])
        return cls(t, z)

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def curve_diameter(curve: Curve) -> float:
    """Largest pairwise chordal distance between samples."""
    z = curve.z
    if len(z) < 2:
        return 0.0
    best = 0.0
    for i in range(0, len(z), 256):
        block = z[i : i + 256]
        best = max(best, float(np.max(chordal_array(block[:, None], z[None, :]))))
    return best


def _segment_point_distance(z: np.ndarray, p: complex) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Distance from ``p`` to each segment of polyline ``z``, nearest points and their fractions."""
    if len(z) == 1:
        return np.abs(z - p), z.copy(), np.zeros(1)
    a, b = z[:-1], z[1:]
    ab = b - a
    denom = np.abs(ab) ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.real((p - a) * np.conj(ab)) / denom
    s = np.where(denom > 0, np.clip(s, 0.0, 1.0), 0.0)
    near = a + s * ab
    return np.abs(near - p), near, s


def distance_to_points(curve_z: np.ndarray, points: Iterable[complex]) -> tuple[float, float, complex]:
    """Minimum chordal distance from a polyline to a point set.

    Returns ``(distance, fractional sample index of the nearest point, point)``.
    """
    best = (math.inf, 0.0, INF)
    for p in points:
        if is_inf(p):
            d = chordal_array(curve_z, INF)
            i = int(np.argmin(d))
            cand = (float(d[i]), float(i), p)
        else:
            _, near, frac = _segment_point_distance(curve_z, complex(p))
            d = chordal_array(near, complex(p))
            i = int(np.argmin(d))
            cand = (float(d[i]), i + float(frac[i]), complex(p))
        if cand[0] < best[0]:
            best = cand
    return best


def _lift_core(
    m: MapSpec, targets: np.ndarray, starts: np.ndarray, max_gap: float
) -> tuple[np.ndarray, np.ndarray]:
    """Continue preimages along rows of ``targets``.

    Returns lifted points and, per row, the first sample index at which the
    branch-jump or gap test failed (``-1`` when the row succeeded).
    """
    E, K = targets.shape
    d = m.degree
    roots = preimage_roots(m, targets.ravel()).reshape(E, K, d)
    lifted = np.empty((E, K), dtype=complex)
    lifted[:, 0] = starts
    fail = np.full(E, -1, dtype=int)
    rows = np.arange(E)
    for i in range(1, K):
        prev = lifted[:, i - 1]
        cand = roots[:, i, :]
        with np.errstate(invalid="ignore"):
            dist = np.abs(cand - prev[:, None])
        dist = np.where(np.isfinite(dist), dist, np.inf)
        if d > 1:
            order = np.argsort(dist, axis=1)
            j = order[:, 0]
            move = dist[rows, j]
            other = dist[rows, order[:, 1]]
        else:
            j = np.zeros(E, dtype=int)
            move = dist[:, 0]
            other = np.full(E, np.inf)
        nxt = cand[rows, j]
        bad = (move > 0.5 * other) | ~np.isfinite(move)
        if max_gap < math.inf:
            bad |= chordal_array(prev, nxt) > max_gap
        newly = bad & (fail < 0)
        fail[newly] = i
        lifted[:, i] = nxt
    return lifted, fail


def _check_clearance(m: MapSpec, curve: Curve, clearance: float, cvals: list[complex]) -> None:
    if not cvals:
        return
    dist, pos, val = distance_to_points(curve.z, cvals)
    if dist < clearance:
        t = float(np.interp(pos, np.arange(len(curve.t)), curve.t))
        raise CriticalValueProximity(t, dist, val)


def _check_start(m: MapSpec, curve: Curve, start: complex) -> None:
    err = chordal(evaluate(m, start), curve.start)
    if err > START_TOL:
        raise LiftError(f"start point maps {err:.3g} away from the curve's initial point")


def lift_curve(
    m: MapSpec,
    curve: Curve,
    start: complex,
    clearance: float = DEFAULT_CLEARANCE,
    max_gap: float = DEFAULT_MAX_GAP,
    _cvals: list[complex] | None = None,
) -> Curve:
    """Lift ``curve`` through ``f`` starting at ``start``.

    Each new sample is the preimage of the target nearest to the previous
    lifted point; the step is bisected when that preimage is not at least
    twice as close as every other preimage, or when the chordal gap exceeds
    ``max_gap``.
    """
    start = complex(start)
    cvals = critical_values(m) if _cvals is None else _cvals
    _check_clearance(m, curve, clearance, cvals)
    _check_start(m, curve, start)
    base = curve
    for _ in range(200):
        lifted, fail = _lift_core(m, base.z[None, :], np.array([start]), max_gap)
        i = int(fail[0])
        if i < 0:
            return Curve(base.t, lifted[0])
        t0, t1 = base.t[i - 1], base.t[i]
        if t1 - t0 < MIN_DT:
            raise NoConvergence(t0, "(bisection floor reached)")
        # bisect the offending interval and a few neighbours at once
        lo = max(i - 2, 1)
        hi = min(i + 2, len(base) - 1)
        mids = 0.5 * (base.t[lo - 1 : hi] + base.t[lo : hi + 1])
        base = base.refined(mids)
    raise NoConvergence(float(base.t[0]), "(refinement budget exhausted)")


def lift_many(
    m: MapSpec,
    curves: Sequence[Curve],
    starts: Sequence[complex],
    clearance: float = DEFAULT_CLEARANCE,
    max_gap: float = DEFAULT_MAX_GAP,
) -> list[Curve]:
    """Lift several curves at once; equivalent to repeated :func:`lift_curve`."""
    cvals = critical_values(m)
    out: list[Curve | None] = [None] * len(curves)
    groups: dict[int, list[int]] = {}
    for idx, c in enumerate(curves):
        groups.setdefault(len(c), []).append(idx)
    for _, idxs in groups.items():
        for i in idxs:
            _check_clearance(m, curves[i], clearance, cvals)
            _check_start(m, curves[i], complex(starts[i]))
        targets = np.stack([curves[i].z for i in idxs])
        st = np.array([complex(starts[i]) for i in idxs])
        lifted, fail = _lift_core(m, targets, st, max_gap)
        for row, i in enumerate(idxs):
            if fail[row] < 0:
                out[i] = Curve(curves[i].t, lifted[row])
            else:
                out[i] = lift_curve(m, curves[i], starts[i], clearance, max_gap, _cvals=cvals)
    return out  # type: ignore[return-value]


def lift_residual(m: MapSpec, lifted: Curve, base: Curve) -> float:
    """``max_t chordal(f(lifted(t)), base(t))`` over the lift's samples."""
    return float(np.max(chordal_array(evaluate_array(m, lifted.z), base(lifted.t))))


@dataclass(frozen=True)
class CriticalClearance:
    distance: float
    clearance: float
    horizon: int
    nearest_orbit_point: complex

    @property
    def passed(self) -> bool:
        return self.distance > self.clearance


def postcritical_set(m: MapSpec, horizon: int) -> list[complex]:
    pts: list[complex] = []
    for c in critical_points(m):
        x = c
        for _ in range(horizon):
            x = evaluate(m, x)
            if any(chordal(x, y) < 1e-14 for y in pts):
                continue
            pts.append(x)
    return pts


def check_critical_clearance(
    m: MapSpec, base_curves: Sequence[Curve], horizon: int, clearance: float = DEFAULT_CLEARANCE
) -> CriticalClearance:
    """Distance from the base curves to the forward critical orbits up to ``horizon``."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    pts = postcritical_set(m, horizon)
    best = (math.inf, INF)
    for c in base_curves:
        d, _, p = distance_to_points(c.z, pts)
        if d < best[0]:
            best = (d, p)
    return CriticalClearance(best[0], clearance, horizon, best[1])
