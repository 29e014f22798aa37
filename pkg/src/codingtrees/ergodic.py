"""Empirical invariant measures, Lyapunov exponents and Pesin blocks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .mapcore import (
    MapSpec,
    PeriodicPoint,
    critical_points,
    evaluate,
    is_inf,
    preimage_roots,
    spherical_derivative_array,
)
from .pullback import ComponentTraceFailure, circle_points, log_derivative_along, pull_back_once
from .telescopes import GoodPointParams, good_times


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Equal- or custom-weight atoms, optionally with the backward chains they came from.

    ``chains[c, j]`` is the ``j``-th step of backward chain ``c``, so
    ``f(chains[c, j + 1]) = chains[c, j]`` and the forward orbit of an atom
    is read off its chain.
    """

    atoms: np.ndarray
    weights: np.ndarray
    provenance: str
    seed: int | None = None
    chains: np.ndarray | None = None
    burn_in: int = 0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to 1")

    def __len__(self) -> int:
        return len(self.atoms)

    def atom_position(self, index: int) -> tuple[int, int]:
        width = self.chains.shape[1] - self.burn_in
        return index // width, self.burn_in + index % width

    def forward_orbit(self, m: MapSpec, index: int, n: int) -> list[complex]:
        """``x, f(x), ..., f^n(x)`` for atom ``index``, from its chain where possible."""
        if self.chains is None:
            x = complex(self.atoms[index])
            out = [x]
            for _ in range(n):
                out.append(evaluate(m, out[-1]))
            return out
        c, j = self.atom_position(index)
        out = [complex(v) for v in self.chains[c, j::-1][: n + 1]]
        while len(out) < n + 1:
            out.append(evaluate(m, out[-1]))
        return out

    def to_rows(self) -> list[tuple[float, float, float]]:
        return [(float(z.real), float(z.imag), float(w)) for z, w in zip(self.atoms, self.weights)]


def sample_mme(
    m: MapSpec,
    n_samples: int,
    burn_in: int = 64,
    n_chains: int = 256,
    seed: int = 0,
) -> EmpiricalMeasure:
    """Random backward orbits, choosing each preimage uniformly; atoms after ``burn_in``."""
    if m.degree < 2:
        raise ValueError("measure of maximal entropy sampling needs degree >= 2")
    rng = np.random.default_rng(seed)
    n_chains = max(1, min(n_chains, n_samples))
    length = burn_in + int(math.ceil(n_samples / n_chains))
    # generic seeds: a random point in the unit square avoids exceptional points a.s.
    z = rng.random(n_chains) + 1j * rng.random(n_chains) + 0.1
    chains = np.empty((n_chains, length), dtype=complex)
    chains[:, 0] = z
    for j in range(1, length):
        roots = preimage_roots(m, chains[:, j - 1])
        pick = rng.integers(0, m.degree, size=n_chains)
        nxt = roots[np.arange(n_chains), pick]
        bad = ~np.isfinite(nxt)
        if np.any(bad):
            # chart swap: take another preimage when one sits at infinity
            alt = roots[bad]
            nxt[bad] = np.array([r[np.isfinite(r)][0] if np.any(np.isfinite(r)) else np.inf for r in alt])
        chains[:, j] = nxt
    atoms = chains[:, burn_in:].ravel()[:n_samples]
    w = np.full(len(atoms), 1.0 / len(atoms))
    return EmpiricalMeasure(atoms, w, "pullback-MME", seed, chains, burn_in)


def cycle_measure(m: MapSpec, point: PeriodicPoint | complex, period: int = 1, length: int = 64) -> EmpiricalMeasure:
    """Equidistribution on a periodic cycle, with the cycle as its own backward chain."""
    if isinstance(point, PeriodicPoint):
        period = point.period
        point = point.location
    cyc = [complex(point)]
    for _ in range(period - 1):
        cyc.append(evaluate(m, cyc[-1]))
    # backward order: chain[j+1] maps to chain[j]
    back = [cyc[(-j) % period] for j in range(length)]
    chains = np.array([back], dtype=complex)
    atoms = np.array(cyc, dtype=complex)
    return EmpiricalMeasure(atoms, np.full(period, 1.0 / period), "periodic-cycle", None, None, 0)


@dataclass(frozen=True)
class LyapunovEstimate:
    value: float
    stderr: float
    used: int
    dropped: int

    def to_dict(self) -> dict:
        return {"value": self.value, "stderr": self.stderr, "used": self.used, "dropped": self.dropped}


def lyapunov(m: MapSpec, measure: EmpiricalMeasure, crit_tol: float = 1e-12) -> LyapunovEstimate:
    """Weighted mean of ``log`` of the spherical derivative over the atoms.

    The standard error uses chain means when chains are available (atoms in
    one chain are correlated), otherwise the plain sample formula.
    """
    z = np.asarray(measure.atoms, dtype=complex)
    w = np.asarray(measure.weights, dtype=float)
    crit = [c for c in critical_points(m) if not is_inf(c)]
    near = np.zeros(len(z), dtype=bool)
    for c in crit:
        near |= np.abs(z - c) < crit_tol
    with np.errstate(divide="ignore"):
        vals = np.log(spherical_derivative_array(m, z))
    drop = near | ~np.isfinite(vals)
    keep = ~drop
    ww = w[keep] / w[keep].sum()
    value = float(np.dot(ww, vals[keep]))
    if measure.chains is not None and not np.any(drop):
        width = measure.chains.shape[1] - measure.burn_in
        n_full = len(z) // width
        means = vals[: n_full * width].reshape(n_full, width).mean(axis=1)
        se = float(np.std(means, ddof=1) / math.sqrt(n_full)) if n_full > 1 else 0.0
    elif np.count_nonzero(keep) > 1 and measure.provenance != "periodic-cycle":
        se = float(np.std(vals[keep], ddof=1) / math.sqrt(np.count_nonzero(keep)))
    else:
        se = 0.0
    return LyapunovEstimate(value, se, int(np.count_nonzero(keep)), int(np.count_nonzero(drop)))


@dataclass(frozen=True)
class RuelleVerdict:
    passed: bool
    h: float
    chi: float
    stderr: float
    bound: float


def ruelle_check(h_mu: float, chi: float, stderr: float = 0.0) -> RuelleVerdict:
    """``h <= 2 chi`` up to three standard errors."""
    bound = 2.0 * chi + 3.0 * stderr
    return RuelleVerdict(bool(h_mu <= bound), h_mu, chi, stderr, bound)


# ---------------------------------------------------------------------------
# Pesin blocks
# ---------------------------------------------------------------------------


def backward_orbits(measure: EmpiricalMeasure, length: int, count: int | None = None) -> list[np.ndarray]:
    """Present point plus ``length`` steps of its sampled past, one per chain."""
    if measure.chains is None:
        raise ValueError("measure has no backward chains")
    ch = measure.chains
    start = measure.burn_in
    if ch.shape[1] < start + length + 1:
        start = max(0, ch.shape[1] - length - 1)
    rows = ch[: count or ch.shape[0]]
    return [row[start : start + length + 1] for row in rows]


@dataclass(frozen=True)
class OrbitPesin:
    ok: bool
    worst_rate: float
    worst_distortion: float
    reason: str = ""


def check_inverse_branches(
    m: MapSpec,
    past: np.ndarray,
    r: float,
    C: float,
    lam: float,
) -> OrbitPesin:
    """Check ``|F_n'(x)| < C lam^n`` and distortion ``< C`` on ``B(x, r)`` along ``past``.

    ``past[0]`` is the present point and ``f(past[j+1]) = past[j]``.  The test
    circle is pulled back along the past; by the maximum principle the
    extremes of ``log|F_n'|`` over the disk are attained on its boundary.
    """
    off = circle_points(r, 64)
    log_center = 0.0
    log_bdry = np.zeros(len(off))
    worst_rate, worst_dist = -math.inf, 0.0
    for n in range(1, len(past)):
        try:
            new = pull_back_once(m, off, past[n], past[n - 1])
        except ComponentTraceFailure as exc:
            return OrbitPesin(False, worst_rate, worst_dist, f"step {n}: {exc}")
        if len(new) != len(off):
            return OrbitPesin(False, worst_rate, worst_dist, f"step {n}: branch not univalent")
        log_center -= float(log_derivative_along(m, np.array([past[n]]))[0])
        log_bdry = log_bdry - log_derivative_along(m, past[n] + new)
        off = new
        rate = log_center - (math.log(C) + n * math.log(lam))
        dist = float(np.max(log_bdry) - np.min(log_bdry))
        worst_rate = max(worst_rate, rate)
        worst_dist = max(worst_dist, dist)
        if rate >= 0:
            return OrbitPesin(False, worst_rate, worst_dist, f"step {n}: derivative bound")
        if dist >= math.log(C):
            return OrbitPesin(False, worst_rate, worst_dist, f"step {n}: distortion")
    return OrbitPesin(True, worst_rate, worst_dist)


@dataclass
class PesinReport:
    r: float
    C: float
    lam: float
    coverage: float
    orbits: int
    length: int
    per_radius: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "C": self.C,
            "lambda": self.lam,
            "coverage": self.coverage,
            "orbits": self.orbits,
            "length": self.length,
            "per_radius": {str(k): v for k, v in self.per_radius.items()},
        }


def default_lambda(chi: float) -> float:
    return math.exp(-chi + 0.1 * chi)


def pesin_block(
    m: MapSpec,
    measure: EmpiricalMeasure,
    lam: float | None = None,
    C: float = 4.0,
    radii: Sequence[float] = (0.8, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1, 0.05, 0.02),
    length: int = 40,
    orbits: int = 128,
    target: float = 0.5,
) -> PesinReport:
    """Largest radius on the grid whose coverage reaches ``target``."""
    if lam is None:
        lam = default_lambda(lyapunov(m, measure).value)
    pasts = backward_orbits(measure, length, orbits)
    per = {}
    best = None
    for r in sorted(radii, reverse=True):
        ok = [check_inverse_branches(m, p, r, C, lam).ok for p in pasts]
        cov = float(np.mean(ok))
        per[r] = cov
        if cov >= target:
            best = PesinReport(r, C, lam, cov, len(pasts), length, per)
            break
    if best is None:
        r = min(radii)
        best = PesinReport(r, C, lam, per[r], len(pasts), length, per)
    return best


def verify_pesin(
    m: MapSpec,
    measure: EmpiricalMeasure,
    report: PesinReport,
    orbits: int = 100,
) -> float:
    """Fraction of (held-out) backward orbits meeting the block inequalities."""
    pasts = backward_orbits(measure, report.length, orbits)
    return float(np.mean([check_inverse_branches(m, p, report.r, report.C, report.lam).ok for p in pasts]))


# ---------------------------------------------------------------------------
# statistical good-point density
# ---------------------------------------------------------------------------


@dataclass
class DensityReport:
    tested: int
    good: int
    not_good: int
    undetermined: int
    densities: list
    histogram: list

    @property
    def fraction(self) -> float:
        return self.good / self.tested if self.tested else 0.0

    def to_dict(self) -> dict:
        return {
            "tested": self.tested,
            "good": self.good,
            "not_good": self.not_good,
            "undetermined": self.undetermined,
            "fraction": self.fraction,
            "histogram": self.histogram,
        }


def statistical_good_density(
    m: MapSpec,
    measure: EmpiricalMeasure,
    params: GoodPointParams,
    horizon: int,
    n_points: int,
    seed: int = 0,
) -> DensityReport:
    """Run ``good_times`` on ``n_points`` atoms; count those with density ``>= kappa``."""
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(len(measure), size=min(n_points, len(measure)), replace=False))
    good = bad = und = 0
    dens = []
    for i in idx:
        if horizon <= 0:
            und += 1
            continue
        orbit = measure.forward_orbit(m, int(i), horizon)
        rep = good_times(m, orbit[0], params, horizon, orbit=orbit)
        dens.append(rep.density)
        if rep.density >= params.kappa:
            good += 1
        elif rep.undetermined and (len(rep.good) + len(rep.undetermined)) / horizon >= params.kappa:
            und += 1
        else:
            bad += 1
    hist, _ = np.histogram(dens, bins=10, range=(0.0, 1.0)) if dens else (np.zeros(10, int), None)
    return DensityReport(len(idx), good, bad, und, dens, [int(h) for h in hist])
