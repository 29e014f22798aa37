"""Good times, telescopes, traces and the annulus census."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .curves import DEFAULT_CLEARANCE, _segment_point_distance
from .linearization import KoenigsChart, annulus_indices
from .mapcore import MapSpec, chordal, evaluate, evaluate_array, is_inf
from .pullback import (
    ComponentTraceFailure,
    circle_points,
    pull_back_many,
    pull_back_once,
    winding_number,
)
from .tree import Address, CodingTree, n_epsilon

ORBIT_LIMIT = 1e12
CIRCLE_SAMPLES = 64


class NoSignificantComponent(RuntimeError):
    def __init__(self, message: str, smallest_n0: int | None = None):
        self.smallest_n0 = smallest_n0
        super().__init__(message)


@dataclass(frozen=True)
class GoodPointParams:
    r: float
    delta: float
    kappa: float
    Delta: int = 1
    n0: int = 12

    def __post_init__(self):
        if not (self.r > 0 and 0 < self.delta < self.r):
            raise ValueError("need 0 < delta < r")
        if not (0 < self.kappa <= 1):
            raise ValueError("need 0 < kappa <= 1")
        if self.Delta < 1 or self.n0 < 0:
            raise ValueError("Delta must be positive and n0 non-negative")

    def to_dict(self) -> dict:
        return {"r": self.r, "delta": self.delta, "kappa": self.kappa, "Delta": self.Delta, "n0": self.n0}


# ---------------------------------------------------------------------------
# orbits
# ---------------------------------------------------------------------------


def forward_orbit(m: MapSpec, q: complex, n: int, max_period: int = 12) -> list[complex]:
    """``q, f(q), ..., f^n(q)``; periodic points are repeated exactly."""
    q = complex(q)
    pts = [q]
    x = q
    for k in range(1, max_period + 1):
        x = evaluate(m, x)
        if not is_inf(x) and chordal(x, q) < 1e-12:
            cycle = pts[:k]
            return [cycle[i % k] for i in range(n + 1)]
        pts.append(x)
        if len(pts) > n:
            break
    while len(pts) <= n:
        pts.append(evaluate(m, pts[-1]))
    return pts[: n + 1]


def _orbit_ok(z: complex) -> bool:
    return not is_inf(z) and np.isfinite(z) and abs(z) < ORBIT_LIMIT


# ---------------------------------------------------------------------------
# good times
# ---------------------------------------------------------------------------


@dataclass
class GoodTimesReport:
    horizon: int
    params: GoodPointParams
    good: list = field(default_factory=list)
    bad: list = field(default_factory=list)
    undetermined: list = field(default_factory=list)
    trace_diameters: dict = field(default_factory=dict)
    basin_check: str = "not requested"

    @property
    def density(self) -> float:
        return len(self.good) / self.horizon if self.horizon > 0 else 0.0

    @property
    def density_ok(self) -> bool:
        return self.horizon > 0 and self.density >= self.params.kappa

    @property
    def diameter_trend(self) -> dict:
        """Shrinking of the traces as a decile trend: top-decile max < 10% of bottom-decile max."""
        times = sorted(self.trace_diameters)
        if len(times) < 2:
            return {"passed": False, "reason": "fewer than two good times"}
        k = max(1, len(times) // 10)
        low = max(self.trace_diameters[t] for t in times[:k])
        high = max(self.trace_diameters[t] for t in times[-k:])
        return {"bottom": low, "top": high, "passed": bool(high < 0.1 * low)}

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "params": self.params.to_dict(),
            "good": self.good,
            "bad": self.bad,
            "undetermined": self.undetermined,
            "density": self.density,
            "density_ok": self.density_ok,
            "diameter_trend": self.diameter_trend,
            "basin_check": self.basin_check,
        }


def pullback_chain(
    m: MapSpec,
    orbit: Sequence[complex],
    nbar: int,
    r: float,
    stop_at: int = 0,
    check: Callable[[int, np.ndarray], bool] | None = None,
    clearance: float = DEFAULT_CLEARANCE,
) -> dict[int, np.ndarray]:
    """Boundaries (relative offsets) of ``B_{nbar,l}`` for ``l = nbar..stop_at``.

    ``check(l, offsets)`` may stop the chain early by returning ``False``.
    """
    off = circle_points(r, CIRCLE_SAMPLES)
    out = {nbar: off}
    for l in range(nbar - 1, stop_at - 1, -1):
        off = pull_back_once(m, off, orbit[l], orbit[l + 1], clearance)
        out[l] = off
        if check is not None and not check(l, off):
            break
    return out


def _points_inside(offsets: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    lo = np.array([offsets.real.min(), offsets.imag.min()])
    hi = np.array([offsets.real.max(), offsets.imag.max()])
    pts = []
    for _ in range(20):
        xy = lo + (hi - lo) * rng.random((4 * n, 2))
        cand = xy[:, 0] + 1j * xy[:, 1]
        pts.extend(c for c in cand if winding_number(offsets, c) != 0)
        if len(pts) >= n:
            break
    return np.array(pts[:n], dtype=complex)


def good_times(
    m: MapSpec,
    q: complex,
    params: GoodPointParams,
    horizon: int,
    orbit: Sequence[complex] | None = None,
    basin: Callable[[complex], bool] | None = None,
    basin_samples: int = 16,
    seed: int = 0,
) -> GoodTimesReport:
    """Test every ``Delta <= nbar <= horizon`` for a nested pullback at time ``nbar``.

    ``orbit`` may supply ``q, f(q), ...`` (for example from a backward chain),
    which avoids the drift of numerically iterating a repelling orbit.
    """
    rep = GoodTimesReport(horizon, params)
    if horizon <= 0:
        return rep
    orbit = list(orbit) if orbit is not None else forward_orbit(m, q, horizon)
    if len(orbit) < horizon + 1:
        orbit = orbit + forward_orbit(m, orbit[-1], horizon + 1 - len(orbit))[1:]
    rng = np.random.default_rng(seed)
    basin_fail = 0
    limit = params.r - params.delta
    usable = horizon
    for i, z in enumerate(orbit[: horizon + 1]):
        if not _orbit_ok(z):
            usable = i - 1
            break
    rep.undetermined.extend(range(max(params.Delta, usable + 1), horizon + 1))
    # wavefront: every candidate time is pulled back through orbit step l together
    active: dict[int, np.ndarray] = {}
    for l in range(usable - 1, -1, -1):
        if l + 1 >= params.Delta:
            active[l + 1] = circle_points(params.r, CIRCLE_SAMPLES)
        if not active:
            continue
        keys = sorted(active)
        res = pull_back_many(m, [active[k] for k in keys], orbit[l], orbit[l + 1])
        for nbar, off in zip(keys, res):
            if isinstance(off, Exception):
                rep.undetermined.append(nbar)
                del active[nbar]
            elif l <= nbar - params.Delta and float(np.max(np.abs(off))) >= limit:
                rep.bad.append(nbar)
                del active[nbar]
            else:
                active[nbar] = off
    for nbar in sorted(active):
        off0 = active[nbar]
        rep.good.append(nbar)
        rep.trace_diameters[nbar] = _diameter(off0)
        if basin is not None:
            pts = orbit[0] + _points_inside(off0, basin_samples, rng)
            w = pts.copy()
            for _ in range(nbar):
                w = evaluate_array(m, w)
            basin_fail += int(np.count_nonzero(np.asarray(basin(w)) & ~np.asarray(basin(pts))))
    rep.good.sort()
    rep.bad.sort()
    rep.undetermined.sort()
    if basin is not None:
        rep.basin_check = "sampled: passed" if basin_fail == 0 else f"sampled: {basin_fail} violations"
    return rep


def _diameter(z: np.ndarray) -> float:
    if len(z) > 512:
        z = z[:: int(math.ceil(len(z) / 512))]
    return float(np.max(np.abs(z[:, None] - z[None, :])))


def escape_radius(m: MapSpec) -> float:
    return 2.0 * max(1.0, max(abs(c) for c in m.numerator) / abs(m.numerator[-1]))


def escapes(m: MapSpec, z, radius: float | None = None, cap: int = 10_000) -> np.ndarray:
    """Vectorised escape-time test: does the orbit leave ``|z| <= radius`` within ``cap`` steps?"""
    if not m.is_polynomial:
        raise ValueError("escape-time basin oracle needs a polynomial")
    R = radius or escape_radius(m)
    w = np.array(z, dtype=complex, ndmin=1)
    out = np.zeros(w.shape, dtype=bool)
    live = np.ones(w.shape, dtype=bool)
    for _ in range(cap):
        with np.errstate(over="ignore", invalid="ignore"):
            big = ~(np.abs(w) <= R)
        out |= big & live
        live &= ~big
        if not live.any():
            break
        w[live] = evaluate_array(m, w[live])
    return out


def escape_basin(m: MapSpec, radius: float | None = None, cap: int = 10_000) -> Callable:
    """Membership oracle for the basin of infinity of a polynomial (arrays in, bools out)."""
    R = radius or escape_radius(m)

    def member(z):
        return escapes(m, z, R, cap)

    return member


# ---------------------------------------------------------------------------
# significance and telescopes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Significance:
    significant: bool
    n0: int
    sampled: bool
    witness: tuple = ()


def significance(
    center: complex,
    radius: float,
    tree: CodingTree,
    n0: int,
    budget: int = 2 ** 14,
    seed: int = 0,
) -> Significance:
    """Does some edge of generation ``<= n0`` meet the open disk ``B(center, radius)``?"""
    rng = np.random.default_rng(seed)
    sampled = False
    for n in range(n0 + 1):
        words, curves, exhaustive = tree.level_edges(n, budget=budget, rng=rng)
        sampled |= not exhaustive
        for w, c in zip(words, curves):
            dist, _, _ = _segment_point_distance(c.z, complex(center))
            if float(np.min(dist)) < radius:
                return Significance(True, n0, sampled, w)
    return Significance(False, n0, sampled)


@dataclass
class Telescope:
    times: list
    centers: list
    r: float
    delta: float
    kappa: float
    links: list  # offsets of D_{t,t-1} relative to centers[t-1]; links[0] unused
    trace: list  # offsets of D_{t,0} relative to centers[0]
    significance: Significance | None = None

    @property
    def k(self) -> int:
        return len(self.times) - 1

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "times": self.times,
            "r": self.r,
            "delta": self.delta,
            "kappa": self.kappa,
            "trace_sup_distance": [float(np.max(np.abs(t))) for t in self.trace],
        }


def build_telescope(
    m: MapSpec,
    q: complex,
    good: Sequence[int],
    params: GoodPointParams,
    k: int,
    tree: CodingTree | None = None,
    orbit: Sequence[complex] | None = None,
    n0_max: int = 16,
) -> Telescope:
    """Telescope of length ``k`` from every ``Delta``-th good time."""
    chosen = sorted(good)[params.Delta - 1 :: params.Delta]
    times = [0] + [t for t in chosen if t > 0][:k]
    if len(times) < k + 1:
        raise ValueError(f"only {len(times) - 1} usable good times for a length-{k} telescope")
    horizon = times[-1]
    orbit = list(orbit) if orbit is not None else forward_orbit(m, q, horizon)
    centers = [orbit[t] for t in times]
    sig = None
    if tree is not None:
        sig = significance(centers[-1], params.r, tree, params.n0)
        if not sig.significant:
            smallest = None
            for n0 in range(params.n0 + 1, n0_max + 1):
                if significance(centers[-1], params.r, tree, n0).significant:
                    smallest = n0
                    break
            raise NoSignificantComponent(
                f"D_k is not {params.n0}-significant", smallest
            )
    links: list = [None]
    trace: list = [circle_points(params.r, CIRCLE_SAMPLES)]
    for t in range(1, k + 1):
        chain = pullback_chain(m, orbit, times[t], params.r, 0)
        links.append(chain[times[t - 1]])
        trace.append(chain[0])
    return Telescope(times, centers, params.r, params.delta, params.kappa / params.Delta, links, trace, sig)


@dataclass
class TelescopeCheck:
    passed: bool
    density_ok: list
    margins: list
    clearance_ok: list
    nesting_ok: list
    failed_links: list

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "density_ok": self.density_ok,
            "margins": self.margins,
            "clearance_ok": self.clearance_ok,
            "nesting_ok": self.nesting_ok,
            "failed_links": self.failed_links,
        }


def verify_telescope(tel: Telescope) -> TelescopeCheck:
    """Independent re-check of clearance, time density, containment and trace nesting."""
    dens, margins, clear, nest, failed = [], [], [], [], []
    times = tel.times
    if times[0] != 0 or any(b <= a for a, b in zip(times, times[1:])):
        return TelescopeCheck(False, [], [], [], [], ["times"])
    for t in range(1, tel.k + 1):
        ok20 = t / times[t] > tel.kappa
        off = tel.links[t]
        margin = tel.r - float(np.max(np.abs(off)))
        contains = winding_number(off, 0.0) != 0
        ok21 = margin > tel.delta and contains
        inner, outer = tel.trace[t], tel.trace[t - 1]
        nested = all(winding_number(outer, z) != 0 for z in inner[:: max(1, len(inner) // 64)])
        dens.append(bool(ok20))
        margins.append(margin)
        clear.append(bool(ok21))
        nest.append(bool(nested))
        if not (ok20 and ok21 and nested):
            failed.append(t)
    return TelescopeCheck(not failed, dens, margins, clear, nest, failed)


@dataclass
class GoodPointVerdict:
    verdict: str
    sup_distance: list
    telescopes: list
    checks: list
    reason: str = ""

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "sup_distance": self.sup_distance,
            "telescopes": [t.to_dict() for t in self.telescopes],
            "checks": [c.to_dict() for c in self.checks],
            "reason": self.reason,
        }


def good_point_verdict(
    m: MapSpec,
    q: complex,
    tree: CodingTree,
    params: GoodPointParams,
    K: int,
    horizon: int | None = None,
    decay_ratio: float = 0.1,
) -> GoodPointVerdict:
    """Build ``Tel^1..Tel^K`` and test uniform decay of the traces.

    ``sup_distance[l]`` is ``max_k`` of the largest distance from ``q`` to the
    boundary of ``D^k_{l,0}``; the point is declared good when every
    telescope verifies and that sup falls below ``decay_ratio`` of its
    initial value while decreasing.
    """
    horizon = horizon or params.Delta * K + 2 * K
    gt = good_times(m, q, params, horizon)
    try:
        tels = [build_telescope(m, q, gt.good, params, k, tree) for k in range(1, K + 1)]
    except (NoSignificantComponent, ValueError, ComponentTraceFailure) as exc:
        return GoodPointVerdict("undetermined", [], [], [], str(exc))
    checks = [verify_telescope(t) for t in tels]
    sup = []
    for l in range(K + 1):
        vals = [float(np.max(np.abs(t.trace[l]))) for t in tels if t.k >= l]
        sup.append(max(vals))
    decreasing = all(b <= a * (1 + 1e-9) for a, b in zip(sup, sup[1:]))
    decays = sup[-1] < decay_ratio * sup[0]
    if all(c.passed for c in checks) and decreasing and decays:
        return GoodPointVerdict("good", sup, tels, checks)
    why = "telescope check failed" if not all(c.passed for c in checks) else "no uniform decay"
    return GoodPointVerdict("undetermined", sup, tels, checks, why)


# ---------------------------------------------------------------------------
# annulus census
# ---------------------------------------------------------------------------


@dataclass
class CensusReport:
    k: int
    E: int
    kappa: float
    eta: float
    T: int
    delta: float
    n_delta_e: int
    elements: list
    a_plus: list
    a_minus: list
    entry_time_ok: bool
    count_ok: bool
    count: int
    count_bound: float
    m0: int | None
    tail_ok: bool
    rings_hit: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "E": self.E,
            "kappa": self.kappa,
            "eta": self.eta,
            "T": self.T,
            "delta": self.delta,
            "N(delta/E)": self.n_delta_e,
            "elements": [list(e) for e in self.elements],
            "A_plus": self.a_plus,
            "A_minus": self.a_minus,
            "entry_time_ok": self.entry_time_ok,
            "count": {"ok": self.count_ok, "value": self.count, "bound": self.count_bound},
            "tail": {"ok": self.tail_ok, "M0": self.m0},
        }


def _ring_intervals(chart: KoenigsChart, z: np.ndarray, k: int) -> tuple[set, np.ndarray]:
    """Rings ``R_0..R_k`` met by the polyline ``z`` (segment-wise), plus node levels."""
    x = chart.relog(z)
    L = chart.log_lam
    hit = set()
    for x0, x1 in zip(x[:-1], x[1:]):
        if not (np.isfinite(x0) or np.isfinite(x1)):
            continue
        lo = min(v for v in (x0, x1) if np.isfinite(v))
        hi = max(v for v in (x0, x1) if np.isfinite(v))
        if lo >= chart.a:
            continue
        hi = min(hi, chart.a - 1e-15)
        m_lo = int(math.ceil((chart.a - hi) / L - 1e-12)) - 1
        m_hi = int(math.ceil((chart.a - lo) / L - 1e-12)) - 1
        for mm in range(max(m_lo, 0), min(m_hi, k) + 1):
            hit.add(mm)
    if len(x) == 1 and np.isfinite(x[0]) and x[0] < chart.a:
        hit.add(min(int(math.ceil((chart.a - x[0]) / L - 1e-12)) - 1, k))
    return hit, x


def annulus_census(
    tree: CodingTree,
    chart: KoenigsChart,
    address: Address,
    k: int,
    E: int,
    kappa: float | None = None,
    n_eps_depth: int = 20,
    max_edges: int = 400,
) -> CensusReport:
    """Counting argument of the good-point proof on a concrete branch.

    The telescope is the chart one: ``D_{m,0} = V_m = {Re log h < a - m log|lam|}``,
    rings ``R_m = V_m minus V_{m+1}`` (``R_k = V_k``), times ``n_m = m * period``.
    """
    kappa = kappa if kappa is not None else 1.0 / chart.period
    if E <= 3.0 / kappa:
        raise ValueError("need E > 3/kappa")
    eta = 1.0 - 3.0 / (E * kappa)
    L = chart.log_lam
    # delta: distance between the boundaries of V_1 and V
    ang = np.exp(2j * np.pi * np.arange(256) / 256)
    outer = chart.h_inverse(math.exp(chart.a) * ang)
    inner = chart.h_inverse(math.exp(chart.a - L) * ang)
    delta = float(np.min(np.abs(outer[:, None] - inner[None, :])))
    ne = n_epsilon(tree, delta / E, budget_depth=n_eps_depth).value

    # edges of b(address) until one enters V_k
    rings, levels = [], []
    T = None
    for t in range(max_edges):
        c = tree.edge(address.letters(t + 1))
        hit, x = _ring_intervals(chart, c.z, k)
        rings.append(hit)
        levels.append(x)
        if k in hit:
            T = t
            break
    if T is None:
        raise RuntimeError(f"branch {address} does not reach V_{k} within {max_edges} edges")

    def inside_vm(t: int, mm: int) -> bool:
        thr = chart.a - mm * L + 1e-12
        return all(np.all(np.isfinite(levels[s]) & (levels[s] <= thr)) for s in range(t + 1, T + 1))

    elements = []
    for mm in range(1, k):
        for t in range(T + 1):
            if mm not in rings[t] or not inside_vm(t, mm):
                continue
            ok = False
            for e1 in range(E):
                if t - e1 < 0 or (mm - 1) not in rings[t - e1]:
                    continue
                for e2 in range(E - e1):
                    if t + e2 <= T and (mm + 1) in rings[t + e2]:
                        ok = True
                        break
                if ok:
                    break
            if ok:
                elements.append((t, mm))
    period = chart.period
    b24 = all(t <= (mm + 1) * period + E + ne for t, mm in elements)
    a_plus = sorted({mm for _, mm in elements})
    a_minus = [mm for mm in range(1, k) if mm not in a_plus]
    rhs = k * eta
    b25 = len(a_plus) >= rhs
    # tail density: smallest M0 with #A+(M) >= eta M for every M >= M0 in A+
    fails = [M for M in a_plus if sum(1 for x in a_plus if x < M) < eta * M]
    m0 = (max(fails) + 1) if fails else (a_plus[0] if a_plus else None)
    b26 = m0 is not None and all(sum(1 for x in a_plus if x < M) >= eta * M for M in a_plus if M >= m0)
    return CensusReport(
        k, E, kappa, eta, T, delta, ne, elements, a_plus, a_minus, b24, b25, len(a_plus), rhs, m0, b26,
        [sorted(r) for r in rings],
    )
