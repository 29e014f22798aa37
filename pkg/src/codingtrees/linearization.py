"""Koenigs charts at repelling periodic points and periodic-branch search."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numpy.polynomial import Polynomial

from .curves import Curve
from .mapcore import (
    MapSpec,
    PeriodicPoint,
    chordal,
    evaluate_array,
    is_inf,
    iterate_map,
)
from .tree import Address, CodingTree, coding_limit

DEFAULT_ORDER = 32
RESIDUAL_TOL = 1e-8


class SeriesDivergence(RuntimeError):
    pass


class PointOutsideChart(ValueError):
    pass


class NoEntryIntoV(RuntimeError):
    pass


class BranchMatchFailure(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Koenigs chart
# ---------------------------------------------------------------------------


def _taylor_at(num: np.ndarray, den: np.ndarray, q: complex, order: int) -> np.ndarray:
    """Taylor coefficients of ``num/den`` at ``q`` up to ``u^order``."""
    shift = Polynomial([q, 1])
    n = Polynomial(num)(shift).coef.astype(complex)
    d = Polynomial(den)(shift).coef.astype(complex)
    n = np.pad(n, (0, max(0, order + 1 - len(n))))[: order + 1]
    d = np.pad(d, (0, max(0, order + 1 - len(d))))[: order + 1]
    if d[0] == 0:
        raise PointOutsideChart("pole at the periodic point")
    out = np.zeros(order + 1, dtype=complex)
    for k in range(order + 1):
        out[k] = (n[k] - np.dot(d[1 : k + 1], out[:k][::-1])) / d[0]
    return out


def _series_eval(coef: np.ndarray, u: np.ndarray) -> np.ndarray:
    out = np.zeros_like(u, dtype=complex)
    for c in coef[::-1]:
        out = out * u + c
    return out


@dataclass(frozen=True, eq=False)
class KoenigsChart:
    """Linearizer ``h`` of ``g = f^period`` near ``q`` with ``h(g z) = lam h(z)``.

    ``coef[n]`` multiplies ``(z - q)^n``; ``V = {log|h| < a}``.
    """

    map: MapSpec
    q: complex
    period: int
    lam: complex
    coef: np.ndarray
    radius: float
    a: float
    residual: float
    notes: tuple = ()

    @property
    def log_lam(self) -> float:
        return math.log(abs(self.lam))

    def g(self, z):
        z = np.asarray(z, dtype=complex)
        for _ in range(self.period):
            z = evaluate_array(self.map, z)
        return z

    def h(self, z):
        return _series_eval(self.coef, np.asarray(z, dtype=complex) - self.q)

    def dh(self, z):
        n = np.arange(1, len(self.coef))
        return _series_eval(self.coef[1:] * n, np.asarray(z, dtype=complex) - self.q)

    def h_inverse(self, xi, iters: int = 40):
        xi = np.asarray(xi, dtype=complex)
        z = self.q + xi
        for _ in range(iters):
            step = (self.h(z) - xi) / self.dh(z)
            z = z - step
            if np.all(np.abs(step) < 1e-15 * (1 + abs(self.q))):
                break
        return z

    def inverse_branch(self, z):
        """``F``: the branch of ``g^{-1}`` fixing ``q``."""
        return self.h_inverse(self.h(z) / self.lam)

    def in_disk(self, z) -> np.ndarray:
        return np.abs(np.asarray(z, dtype=complex) - self.q) < self.radius

    def relog(self, z) -> np.ndarray:
        """``Re log h(z)``; ``nan`` outside the validity disk."""
        z = np.asarray(z, dtype=complex)
        out = np.full(z.shape, np.nan)
        inside = self.in_disk(z)
        if np.any(inside):
            with np.errstate(divide="ignore"):
                out[inside] = np.log(np.abs(self.h(z[inside])))
        return out

    def in_v(self, z) -> np.ndarray:
        x = self.relog(z)
        return (np.isfinite(x) & (x < self.a)) | np.isneginf(x)

    def equivariance_residual(self, z) -> float:
        z = np.asarray(z, dtype=complex)
        return float(np.max(np.abs(self.h(self.g(z)) - self.lam * self.h(z))))

    def to_dict(self) -> dict:
        return {
            "q": [self.q.real, self.q.imag],
            "period": self.period,
            "multiplier": [self.lam.real, self.lam.imag],
            "order": len(self.coef) - 1,
            "radius": self.radius,
            "level_a": self.a,
            "residual": self.residual,
            "notes": list(self.notes),
        }


def koenigs_coefficients(m: MapSpec, q: complex, period: int, order: int) -> tuple[complex, np.ndarray]:
    num, den = iterate_map(m, period)
    c = _taylor_at(num, den, q, order)
    lam = c[1]
    if abs(lam) <= 1:
        raise ValueError(f"q is not repelling (|multiplier| = {abs(lam):.6g})")
    b = np.zeros(order + 1, dtype=complex)
    b[1] = 1.0
    G = c.copy()
    G[0] = 0.0
    # powers[k] = G^k truncated at u^order
    powers = [None, G]
    for k in range(2, order + 1):
        powers.append(np.convolve(powers[-1], G)[: order + 1])
    for n in range(2, order + 1):
        acc = sum(b[k] * powers[k][n] for k in range(1, n))
        denom = lam - lam ** n
        assert abs(denom) > 0, "resonance impossible for |lam| > 1"
        b[n] = acc / denom
    return complex(lam), b


def _circle(q: complex, r: float, n: int = 64) -> np.ndarray:
    return q + r * np.exp(2j * np.pi * (np.arange(n) + 0.5) / n)


def koenigs_chart(
    m: MapSpec,
    q: PeriodicPoint | complex,
    order: int = DEFAULT_ORDER,
    period: int | None = None,
    tol: float = RESIDUAL_TOL,
    avoid: Iterable[complex] = (),
) -> KoenigsChart:
    """Build the chart; ``avoid`` lists points (root, base curves) V should exclude."""
    if isinstance(q, PeriodicPoint):
        period = q.period
        q = q.location
    period = period or 1
    q = complex(q)
    if is_inf(q):
        raise PointOutsideChart("charts are built at finite periodic points only")
    lam, coef = koenigs_coefficients(m, q, period, order)
    probe = KoenigsChart(m, q, period, lam, coef, 1.0, 0.0, 0.0)

    def residual(r: float) -> float:
        pts = np.concatenate([_circle(q, r * s) for s in (0.25, 0.5, 0.75, 1.0)])
        res = probe.equivariance_residual(pts)
        if not np.isfinite(res) or np.min(np.abs(probe.dh(pts))) < 0.2:
            return math.inf
        return res

    target = 0.25 * tol  # margin so interior samples stay below tol
    lo = 1e-6
    if residual(lo) > target:
        raise SeriesDivergence(f"conjugacy residual above {tol} at every tested radius")
    hi = 1.0
    if residual(hi) <= target:
        lo = hi
    else:
        for _ in range(50):
            mid = math.sqrt(lo * hi)
            if residual(mid) <= target:
                lo = mid
            else:
                hi = mid
            if hi / lo < 1.001:
                break
    radius = lo
    res = residual(radius)
    edge_h = np.abs(probe.h(_circle(q, 0.95 * radius, 128)))
    a = math.log(float(np.min(edge_h)))
    notes = []
    pts = np.array([complex(p) for p in avoid if not is_inf(p)], dtype=complex)
    if len(pts):
        near = pts[np.abs(pts - q) < radius]
        if len(near):
            hv = np.abs(probe.h(near))
            hv = hv[hv > 0]
            if len(hv):
                cut = math.log(float(np.min(hv))) - 0.05
                if cut < a:
                    if cut > a - 3 * math.log(abs(lam)):
                        a = cut
                    else:
                        a = a - 3 * math.log(abs(lam))
                        notes.append("V could not exclude all avoided points; level lowered by 3 annuli")
    return KoenigsChart(m, q, period, lam, coef, radius, a, res, tuple(notes))


def diam_relog(chart: KoenigsChart, points) -> float:
    """Spread of ``Re log h`` over a point set inside ``V``."""
    if isinstance(points, Curve):
        points = points.z
    z = np.atleast_1d(np.asarray(points, dtype=complex))
    x = chart.relog(z)
    if np.any(np.isnan(x)) or np.any(x >= chart.a):
        raise PointOutsideChart("point set leaves V")
    if np.any(np.isneginf(x)):
        raise PointOutsideChart("point set contains q")
    if len(x) == 0:
        return 0.0
    return float(np.max(x) - np.min(x))


def annulus_index(chart: KoenigsChart, z: complex) -> int:
    """The ``m >= 0`` with ``a-(m+1)log|lam| < Re log h(z) <= a - m log|lam|``."""
    x = float(chart.relog(np.array([z]))[0])
    if math.isnan(x) or x >= chart.a or math.isinf(x):
        raise PointOutsideChart(f"{z} is not in V minus q")
    return int(math.ceil((chart.a - x) / chart.log_lam - 1e-12)) - 1


def annulus_indices(chart: KoenigsChart, z: np.ndarray) -> np.ndarray:
    """Vectorized ``annulus_index``; ``-1`` marks points outside ``V``."""
    x = chart.relog(np.asarray(z, dtype=complex))
    out = np.full(x.shape, -1, dtype=np.int64)
    ok = np.isfinite(x) & (x < chart.a)
    out[ok] = np.ceil((chart.a - x[ok]) / chart.log_lam - 1e-12).astype(np.int64) - 1
    out[np.isneginf(x)] = np.iinfo(np.int64).max
    return out


# ---------------------------------------------------------------------------
# periodic branches
# ---------------------------------------------------------------------------


@dataclass
class BranchReport:
    status: str
    address: Address | None
    rate: float
    expected_rate: float
    entry_word: tuple = ()
    blocks: list = field(default_factory=list)
    distances: list = field(default_factory=list)
    limit: complex | None = None
    limit_error: float = math.nan

    @property
    def rate_error(self) -> float:
        if not (self.rate > 0 and self.expected_rate > 0):
            return math.nan
        return abs(self.rate - self.expected_rate) / self.expected_rate

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "address": self.address.to_dict() if self.address else None,
            "rate": self.rate,
            "expected_rate": self.expected_rate,
            "rate_error": self.rate_error,
            "entry_word": list(self.entry_word),
            "blocks": [list(b) for b in self.blocks],
            "limit": None if self.limit is None else [self.limit.real, self.limit.imag],
            "limit_error": self.limit_error,
            "distances": self.distances,
        }


def _find_entry(tree: CodingTree, chart: KoenigsChart, depth: int, seed: int) -> tuple[tuple, float, complex]:
    rng = np.random.default_rng(seed)
    for n in range(depth + 1):
        words, curves, _ = tree.level_edges(n, rng=rng)
        for w, c in sorted(zip(words, curves), key=lambda wc: wc[0]):
            x = chart.relog(c.z)
            ok = np.isfinite(x) & (x < chart.a)
            if np.any(ok):
                i = int(np.flatnonzero(ok)[np.argmin(x[ok])])
                return w, float(c.t[i]), complex(c.z[i])
    raise NoEntryIntoV(f"no edge of generation <= {depth} enters V")


def _node_value(curve: Curve, t: float) -> complex:
    i = int(np.searchsorted(curve.t, t))
    if i < len(curve.t) and curve.t[i] == t:
        return complex(curve.z[i])
    return complex(curve(t))


def _periodic_tail(blocks: list, max_period: int, repeats: int) -> int:
    for s in range(1, max_period + 1):
        if len(blocks) < repeats * s:
            break
        tail = blocks[-repeats * s :]
        if all(tail[i] == tail[i + s] for i in range(len(tail) - s)):
            return s
    return 0


def fit_rate(vertices: Sequence[complex], q: complex, lo: float = 1e-11, hi: float = 0.05) -> float:
    """``exp`` of the least-squares slope of ``log|z_n - q|`` against ``n``."""
    d = np.abs(np.asarray(vertices, dtype=complex) - q)
    n = np.arange(len(d))
    keep = (d > lo * max(1.0, abs(q))) & (d < hi)
    if np.count_nonzero(keep) < 4:
        return math.nan
    slope = np.polyfit(n[keep], np.log(d[keep]), 1)[0]
    return float(math.exp(slope))


def find_periodic_branch(
    tree: CodingTree,
    q: PeriodicPoint,
    chart: KoenigsChart,
    max_period: int = 6,
    depth: int = 12,
    repeats: int = 3,
    match_tol: float = 1e-6,
    seed: int = 0,
) -> BranchReport:
    """Locate an eventually periodic address whose branch lands at ``q``.

    An edge point ``p`` inside ``V`` is pushed by the inverse branch ``F``
    repeatedly; each time the prepended letter block is read off by matching
    ``F(p)`` against the candidate edges at the same curve parameter.
    """
    qz = complex(q.location)
    m = chart.period
    expected = abs(chart.lam) ** (-1.0 / m)
    for j, c in enumerate(tree.base_curves, start=1):
        if np.all(np.abs(c.z - qz) < 1e-14):
            return BranchReport("degenerate", Address((), (j,)), math.nan, expected, limit=qz, limit_error=0.0)

    w0, tstar, p = _find_entry(tree, chart, depth, seed)
    word = tuple(w0)
    blocks: list[tuple] = []
    dists = [abs(p - qz)]
    budget = repeats * max_period + 4 * max_period + 8
    period_blocks = 0
    for _ in range(budget):
        target = complex(chart.inverse_branch(np.array([p]))[0])
        best, best_d, vals = None, math.inf, []
        for beta in itertools.product(range(1, tree.d + 1), repeat=m):
            v = _node_value(tree.edge(beta + word), tstar)
            dd = abs(v - target)
            vals.append(dd)
            if dd < best_d:
                best, best_d, bv = beta, dd, v
        scale = max(abs(p - qz), 1e-300)
        if best_d > match_tol * max(scale, 1e-12) and best_d > 1e-12:
            raise BranchMatchFailure(
                f"no lifted edge passes through F(p) (closest {best_d:.3g}, |p-q| = {scale:.3g})"
            )
        blocks.append(best)
        word = best + word
        p = bv
        dists.append(abs(p - qz))
        period_blocks = _periodic_tail(blocks, max_period, repeats)
        if period_blocks:
            break
    if not period_blocks:
        return BranchReport("no-recurrence", None, math.nan, expected, tuple(w0), blocks, dists)

    newest = [x for b in blocks[::-1][:period_blocks] for x in b]
    report = None
    for r in range(len(newest)):
        addr = Address((), tuple(newest[r:] + newest[:r]))
        lim = coding_limit(tree, addr, raise_on_failure=False)
        err = chordal(lim.point, qz)
        if report is None or err < report.limit_error:
            rate = fit_rate(lim.vertices, qz)
            report = BranchReport("found", addr, rate, expected, tuple(w0), blocks, dists, lim.point, err)
        if err < 1e-8:
            break
    if report.limit_error > 1e-6:
        report.status = "landing-mismatch"
    return report


@dataclass
class EnumerationReport:
    q: complex
    bound: int
    addresses: list
    candidates: int
    unconverged: int

    @property
    def count(self) -> int:
        return len(self.addresses)

    def to_dict(self) -> dict:
        return {
            "q": [self.q.real, self.q.imag],
            "bound": self.bound,
            "addresses": [str(a) for a in self.addresses],
            "count": self.count,
            "candidates": self.candidates,
            "unconverged": self.unconverged,
        }


def candidate_addresses(d: int, bound: int) -> list[Address]:
    """Distinct eventually periodic addresses with ``preperiod + period <= bound``."""
    seen: dict[str, Address] = {}
    for total in range(1, bound + 1):
        for pl in range(total):
            for pre in itertools.product(range(1, d + 1), repeat=pl):
                for per in itertools.product(range(1, d + 1), repeat=total - pl):
                    a = Address(pre, per)
                    if len(a.prefix) + len(a.period) <= bound:
                        seen.setdefault(str(a), a)
    return list(seen.values())


def enumerate_converging_branches(
    tree: CodingTree,
    q: PeriodicPoint | complex,
    bound: int = 4,
    tol: float = 1e-6,
    cap: int = 400,
) -> EnumerationReport:
    """All addresses with ``preperiod + period <= bound`` whose branch lands at ``q``."""
    qz = complex(q.location if isinstance(q, PeriodicPoint) else q)
    found, unconverged = [], 0
    cands = candidate_addresses(tree.d, bound)
    for a in cands:
        lim = coding_limit(tree, a, cap=cap, raise_on_failure=False)
        if not lim.converged:
            unconverged += 1
        if chordal(lim.point, qz) < tol:
            assert a.period, "search space holds eventually periodic words only"
            found.append(a)
    return EnumerationReport(qz, bound, found, len(cands), unconverged)


def relog_uniform_bound(
    tree: CodingTree,
    chart: KoenigsChart,
    depth: int,
    seed: int = 0,
) -> float:
    """Largest ``diam_relog`` of ``edge cap V`` over (sampled) edges up to ``depth``."""
    rng = np.random.default_rng(seed)
    best = 0.0
    for n in range(depth + 1):
        _, curves, _ = tree.level_edges(n, rng=rng)
        for c in curves:
            x = chart.relog(c.z)
            x = x[np.isfinite(x) & (x < chart.a)]
            if len(x) > 1:
                best = max(best, float(np.max(x) - np.min(x)))
    return best
