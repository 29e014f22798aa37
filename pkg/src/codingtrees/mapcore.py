"""Rational maps of the Riemann sphere.

A map is stored as two coefficient lists in *ascending* powers,
``f(z) = P(z) / Q(z)``.  The point at infinity is the complex value
``INF`` (``complex("inf")``); every function here accepts it and switches
to the chart ``w = 1/z`` when needed.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

INF = complex(math.inf, 0.0)

PARABOLIC_TOL = 1e-9
ROOT_CLUSTER_TOL = 1e-6
MAX_SOLVE_DEGREE = 64


class DegreeOverflow(ValueError):
    """Raised when a periodic-point solve would exceed the degree bound."""


class InvalidMap(ValueError):
    pass


def is_inf(z) -> bool:
    return cmath.isinf(complex(z))


def chordal(z, w) -> float:
    """Chordal distance on the sphere, ``2|z-w| / sqrt((1+|z|^2)(1+|w|^2))``."""
    zi, wi = is_inf(z), is_inf(w)
    if zi and wi:
        return 0.0
    if zi:
        return 2.0 / math.hypot(1.0, abs(w))
    if wi:
        return 2.0 / math.hypot(1.0, abs(z))
    z, w = complex(z), complex(w)
    return 2.0 * (abs(z - w) / math.hypot(1.0, abs(z))) / math.hypot(1.0, abs(w))


def chordal_array(z: np.ndarray, w) -> np.ndarray:
    """Vectorised chordal distance for finite arrays (broadcasting)."""
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    zinf = ~np.isfinite(z)
    winf = ~np.isfinite(w)
    with np.errstate(invalid="ignore", over="ignore"):
        nz = np.hypot(1.0, np.abs(z))
        nw = np.hypot(1.0, np.abs(w))
        out = 2.0 * (np.abs(z - w) / nz) / nw
        out = np.where(zinf & ~winf, 2.0 / nw, out)
        out = np.where(winf & ~zinf, 2.0 / nz, out)
        out = np.where(zinf & winf, 0.0, out)
    return out


def _trim(c: np.ndarray, tol: float = 0.0) -> np.ndarray:
    c = np.asarray(c, dtype=complex)
    n = len(c)
    while n > 1 and abs(c[n - 1]) <= tol:
        n -= 1
    return c[:n]


def _polyval(c: np.ndarray, z):
    # Horner, ascending coefficients
    out = np.zeros_like(np.asarray(z, dtype=complex)) + c[-1]
    for a in c[-2::-1]:
        out = out * z + a
    return out


def _polyder(c: np.ndarray) -> np.ndarray:
    if len(c) == 1:
        return np.zeros(1, dtype=complex)
    return c[1:] * np.arange(1, len(c))


def _polymul(a, b):
    return np.convolve(a, b)


def _polyadd(a, b):
    n = max(len(a), len(b))
    out = np.zeros(n, dtype=complex)
    out[: len(a)] += a
    out[: len(b)] += b
    return out


def _resultant_small(p: np.ndarray, q: np.ndarray) -> float:
    """Smallest |Q| over roots of P (and vice versa), scaled; zero iff common root."""
    vals = []
    if len(p) > 1:
        for r in np.roots(p[::-1]):
            vals.append(abs(_polyval(q, r)) / max(1.0, np.max(np.abs(q))))
    if len(q) > 1:
        for r in np.roots(q[::-1]):
            vals.append(abs(_polyval(p, r)) / max(1.0, np.max(np.abs(p))))
    return min(vals) if vals else math.inf


@dataclass(frozen=True)
class MapSpec:
    """Rational map ``P/Q`` with ascending complex coefficients."""

    numerator: tuple
    denominator: tuple = (1 + 0j,)
    name: str = ""

    def __post_init__(self):
        p = _trim(np.array(self.numerator, dtype=complex))
        q = _trim(np.array(self.denominator, dtype=complex))
        if np.all(q == 0):
            raise InvalidMap("denominator is identically zero")
        if np.all(p == 0):
            raise InvalidMap("numerator is identically zero")
        object.__setattr__(self, "numerator", tuple(complex(c) for c in p))
        object.__setattr__(self, "denominator", tuple(complex(c) for c in q))
        if len(p) > 1 and len(q) > 1 and _resultant_small(p, q) < 1e-12:
            raise InvalidMap("numerator and denominator share a root")
        if self.degree < 1:
            raise InvalidMap("constant maps are not supported")

    @classmethod
    def polynomial(cls, coeffs: Sequence, name: str = "") -> "MapSpec":
        return cls(tuple(coeffs), (1 + 0j,), name)

    @property
    def p(self) -> np.ndarray:
        return np.array(self.numerator, dtype=complex)

    @property
    def q(self) -> np.ndarray:
        return np.array(self.denominator, dtype=complex)

    @property
    def degree(self) -> int:
        return max(len(self.numerator), len(self.denominator)) - 1

    @property
    def is_polynomial(self) -> bool:
        return len(self.denominator) == 1

    def padded(self) -> tuple[np.ndarray, np.ndarray]:
        """Numerator and denominator padded to length ``degree + 1``."""
        d = self.degree
        p = np.zeros(d + 1, dtype=complex)
        q = np.zeros(d + 1, dtype=complex)
        p[: len(self.numerator)] = self.numerator
        q[: len(self.denominator)] = self.denominator
        return p, q

    def to_dict(self) -> dict:
        return {
            "numerator": [[c.real, c.imag] for c in self.numerator],
            "denominator": [[c.real, c.imag] for c in self.denominator],
            "name": self.name,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MapSpec":
        def cplx(lst, key):
            out = []
            for i, c in enumerate(lst):
                if isinstance(c, (int, float)):
                    out.append(complex(c))
                elif isinstance(c, (list, tuple)) and len(c) == 2:
                    out.append(complex(float(c[0]), float(c[1])))
                else:
                    raise InvalidMap(f"{key}[{i}]: expected [re, im] pair, got {c!r}")
            return tuple(out)

        if "numerator" not in data:
            raise InvalidMap("map: missing field 'numerator'")
        num = cplx(data["numerator"], "numerator")
        den = cplx(data.get("denominator", [[1.0, 0.0]]), "denominator")
        return cls(num, den, data.get("name", ""))


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def _reversed_pair(m: MapSpec) -> tuple[np.ndarray, np.ndarray]:
    """Polynomials ``Pr, Qr`` in ``w`` with ``f(1/w) = Pr(w)/Qr(w)``."""
    p, q = m.padded()
    return p[::-1].copy(), q[::-1].copy()


def _ratio(num, den):
    if den == 0:
        return INF if num != 0 else complex("nan")
    return num / den


def evaluate(m: MapSpec, z) -> complex:
    """``f(z)`` on the sphere."""
    if is_inf(z):
        pr, qr = _reversed_pair(m)
        return _ratio(pr[0], qr[0])
    z = complex(z)
    if abs(z) > 1e8:
        pr, qr = _reversed_pair(m)
        w = 1.0 / z
        return _ratio(complex(_polyval(pr, w)), complex(_polyval(qr, w)))
    return _ratio(complex(_polyval(m.p, z)), complex(_polyval(m.q, z)))


def evaluate_array(m: MapSpec, z: np.ndarray) -> np.ndarray:
    """Vectorised ``f`` for finite inputs; poles map to ``INF``."""
    z = np.asarray(z, dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        num = _polyval(m.p, z)
        if m.is_polynomial:
            return num / m.denominator[0]
        den = _polyval(m.q, z)
        out = num / den
        return np.where(den == 0, INF, out)


def derivative(m: MapSpec, z) -> complex:
    """``f'(z)`` in the finite chart (``z`` finite, not a pole)."""
    z = complex(z)
    p, q = m.p, m.q
    pv, qv = complex(_polyval(p, z)), complex(_polyval(q, z))
    dp, dq = complex(_polyval(_polyder(p), z)), complex(_polyval(_polyder(q), z))
    return (dp * qv - pv * dq) / (qv * qv)


def derivative_array(m: MapSpec, z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    dp = _polyval(_polyder(m.p), z)
    if m.is_polynomial:
        return dp / m.denominator[0]
    pv, qv = _polyval(m.p, z), _polyval(m.q, z)
    dq = _polyval(_polyder(m.q), z)
    with np.errstate(divide="ignore", invalid="ignore"):
        return (dp * qv - pv * dq) / (qv * qv)


def _rat_derivative(num, den, x):
    nv, dv = complex(_polyval(num, x)), complex(_polyval(den, x))
    dn, dd = complex(_polyval(_polyder(num), x)), complex(_polyval(_polyder(den), x))
    return (dn * dv - nv * dd) / (dv * dv)


def chart_derivative(m: MapSpec, z) -> complex:
    """Derivative of ``f`` at ``z`` in local charts (``1/z`` near infinity).

    Products of these along a cycle give the chart-independent multiplier.
    """
    fz = evaluate(m, z)
    if not is_inf(z):
        z = complex(z)
        if not is_inf(fz):
            return derivative(m, z)
        # 1/f = Q/P near a pole
        return _rat_derivative(m.q, m.p, z)
    pr, qr = _reversed_pair(m)
    if not is_inf(fz):
        return _rat_derivative(pr, qr, 0j)
    return _rat_derivative(qr, pr, 0j)


def spherical_derivative(m: MapSpec, z) -> float:
    """``|f'(z)| (1+|z|^2) / (1+|f(z)|^2)``, the derivative in the chordal metric."""
    if is_inf(z) or is_inf(evaluate(m, z)):
        return abs(chart_derivative(m, z))
    z = complex(z)
    fz = evaluate(m, z)
    return abs(derivative(m, z)) * (1.0 + abs(z) ** 2) / (1.0 + abs(fz) ** 2)


def spherical_derivative_array(m: MapSpec, z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    fz = evaluate_array(m, z)
    with np.errstate(invalid="ignore", over="ignore"):
        return np.abs(derivative_array(m, z)) * (1.0 + np.abs(z) ** 2) / (1.0 + np.abs(fz) ** 2)


def orbit(m: MapSpec, z, n: int) -> list:
    out = [complex(z)]
    for _ in range(n):
        out.append(evaluate(m, out[-1]))
    return out


# ---------------------------------------------------------------------------
# roots
# ---------------------------------------------------------------------------


def _cluster(roots: np.ndarray, tol: float = ROOT_CLUSTER_TOL) -> list[tuple[complex, int]]:
    """Group numerically repeated roots; returns (mean, multiplicity) pairs."""
    groups: list[list[complex]] = []
    for r in roots:
        for g in groups:
            if abs(r - g[0]) <= tol * max(1.0, abs(g[0])):
                g.append(r)
                break
        else:
            groups.append([r])
    return [(complex(np.mean(g)), len(g)) for g in groups]


def _polish(c: np.ndarray, z: complex, iters: int = 8) -> complex:
    dc = _polyder(c)
    best, best_res = z, abs(_polyval(c, z))
    for _ in range(iters):
        d = _polyval(dc, best)
        if d == 0:
            break
        cand = best - _polyval(c, best) / d
        res = abs(_polyval(c, cand))
        if not res < best_res:
            break
        best, best_res = complex(cand), res
    return complex(best)


def polynomial_roots(c: Sequence[complex], cluster_tol: float = ROOT_CLUSTER_TOL) -> list[tuple[complex, int]]:
    """Roots of an ascending-coefficient polynomial with multiplicities.

    Companion-matrix eigenvalues followed by a Newton polish of each simple root.
    """
    c = _trim(np.asarray(c, dtype=complex))
    if len(c) == 1:
        return []
    raw = np.roots(c[::-1])
    out = []
    for r, k in _cluster(raw, cluster_tol):
        if k == 1:
            r = _polish(c, r)
        out.append((r, k))
    return out


def _compose(m: MapSpec, num: np.ndarray, den: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(N, D)`` with ``f(num/den) = N/D`` as polynomials."""
    p, q = m.padded()
    d = m.degree
    # N = sum_k p_k num^k den^(d-k)
    pows_n = [np.ones(1, dtype=complex)]
    pows_d = [np.ones(1, dtype=complex)]
    for _ in range(d):
        pows_n.append(_polymul(pows_n[-1], num))
        pows_d.append(_polymul(pows_d[-1], den))
    N = np.zeros(1, dtype=complex)
    D = np.zeros(1, dtype=complex)
    for k in range(d + 1):
        term = _polymul(pows_n[k], pows_d[d - k])
        if p[k] != 0:
            N = _polyadd(N, p[k] * term)
        if q[k] != 0:
            D = _polyadd(D, q[k] * term)
    return _trim(N, 1e-300), _trim(D, 1e-300)


def iterate_map(m: MapSpec, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Numerator and denominator of ``f^n``."""
    if m.degree ** n > MAX_SOLVE_DEGREE:
        raise DegreeOverflow(f"deg f^{n} = {m.degree}^{n} exceeds {MAX_SOLVE_DEGREE}")
    num = np.array([0, 1], dtype=complex)
    den = np.array([1], dtype=complex)
    for _ in range(n):
        num, den = _compose(m, num, den)
    return num, den


@dataclass(frozen=True)
class Preimage:
    point: complex
    multiplicity: int = 1

    @property
    def critical(self) -> bool:
        return self.multiplicity > 1


def preimages(m: MapSpec, w) -> list[Preimage]:
    """All ``d`` solutions of ``f(z) = w`` counted with multiplicity."""
    d = m.degree
    p, q = m.padded()
    if is_inf(w):
        c = q
    else:
        c = p - complex(w) * q
    ct = _trim(c, 1e-14 * max(1.0, float(np.max(np.abs(c)))))
    out = [Preimage(r, k) for r, k in polynomial_roots(ct)]
    missing = d - (len(ct) - 1)
    if missing > 0:
        out.append(Preimage(INF, missing))
    return out


def preimage_roots(m: MapSpec, w: np.ndarray, polish: int = 3) -> np.ndarray:
    """Finite preimages of many targets at once, shape ``(len(w), d)``.

    Batched companion eigenvalues plus a few vectorised Newton steps.  Targets
    where the equation drops degree (``w = f(inf)``) get ``INF`` entries.
    """
    w = np.asarray(w, dtype=complex).ravel()
    d = m.degree
    p, q = m.padded()
    coeffs = p[None, :] - w[:, None] * q[None, :]
    lead = coeffs[:, d]
    scale = np.max(np.abs(coeffs), axis=1)
    degenerate = np.abs(lead) <= 1e-13 * np.maximum(scale, 1.0)
    out = np.full((len(w), d), INF, dtype=complex)
    good = ~degenerate
    if np.any(good):
        cg = coeffs[good] / lead[good, None]
        if d == 1:
            roots = -cg[:, :1]
        else:
            comp = np.zeros((cg.shape[0], d, d), dtype=complex)
            comp[:, np.arange(1, d), np.arange(d - 1)] = 1.0
            comp[:, :, d - 1] = -cg[:, :d]
            roots = np.linalg.eigvals(comp)
        dp, dq = _polyder(p), _polyder(q)
        wg = w[good][:, None]
        for _ in range(polish):
            fv = _polyval(p, roots) - wg * _polyval(q, roots)
            dv = _polyval(dp, roots) - wg * _polyval(dq, roots)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = fv / dv
            ok = np.isfinite(step) & (np.abs(step) < 0.1 * (1.0 + np.abs(roots)))
            roots = np.where(ok, roots - np.where(ok, step, 0), roots)
        out[good] = roots
    for i in np.flatnonzero(degenerate):
        pts = []
        for pre in preimages(m, w[i]):
            pts.extend([pre.point] * pre.multiplicity)
        out[i] = np.array(pts[:d], dtype=complex)
    return out


# ---------------------------------------------------------------------------
# critical and periodic points
# ---------------------------------------------------------------------------


def critical_points(m: MapSpec) -> list[complex]:
    """Distinct critical points on the sphere (``INF`` included when critical)."""
    p, q = m.p, m.q
    wronsk = _polyadd(_polymul(_polyder(p), q), -_polymul(p, _polyder(q)))
    wronsk = _trim(wronsk, 1e-14 * max(1.0, float(np.max(np.abs(wronsk)))))
    roots = polynomial_roots(wronsk)
    pts = [r for r, _ in roots]
    finite_count = len(wronsk) - 1
    if 2 * m.degree - 2 - finite_count > 0:
        pts.append(INF)
    return pts


def critical_values(m: MapSpec) -> list[complex]:
    return [evaluate(m, c) for c in critical_points(m)]


@dataclass(frozen=True)
class PeriodicPoint:
    location: complex
    period: int
    multiplier: complex
    kind: str = field(default="")

    def __post_init__(self):
        if not self.kind:
            object.__setattr__(self, "kind", classify(self.multiplier))

    @property
    def repelling(self) -> bool:
        return self.kind == "repelling"


def classify(multiplier: complex, tol: float = PARABOLIC_TOL) -> str:
    a = abs(multiplier)
    if abs(a - 1.0) <= tol:
        return "parabolic-suspect"
    return "attracting" if a < 1.0 else "repelling"


def cycle_multiplier(m: MapSpec, z, period: int) -> complex:
    mult = 1 + 0j
    x = z
    for _ in range(period):
        mult *= chart_derivative(m, x)
        x = evaluate(m, x)
    return mult


def _returns(m: MapSpec, z, k: int, tol: float) -> bool:
    x = z
    for _ in range(k):
        x = evaluate(m, x)
    return chordal(x, z) < tol


def periodic_points(m: MapSpec, period: int, tol: float = 1e-8) -> list[PeriodicPoint]:
    """Points of exact period ``period`` with their cycle multipliers."""
    if period < 1:
        raise ValueError("period must be positive")
    num, den = iterate_map(m, period)
    eq = _polyadd(num, -_polymul(np.array([0, 1], dtype=complex), den))
    eq = _trim(eq, 1e-13 * max(1.0, float(np.max(np.abs(eq)))))
    sols: list[complex] = [r for r, _ in polynomial_roots(eq)]
    total = max(m.degree ** period, 1) + 1
    if total - (len(eq) - 1) > 0:
        sols.append(INF)
    out = []
    for z in sols:
        if any(_returns(m, z, k, tol) for k in range(1, period) if period % k == 0):
            continue
        if not _returns(m, z, period, 1e-6):
            continue
        out.append(PeriodicPoint(z, period, cycle_multiplier(m, z, period)))
    return out


def load_fixture(name: str) -> MapSpec:
    """Named maps used in examples and tests."""
    table = {
        "z2": MapSpec.polynomial([0, 0, 1], "z^2"),
        "z2-1": MapSpec.polynomial([-1, 0, 1], "z^2-1"),
        "z3-3z": MapSpec.polynomial([0, -3, 0, 1], "z^3-3z"),
        "z2+1": MapSpec.polynomial([1, 0, 1], "z^2+1"),
        "2z": MapSpec.polynomial([0, 2], "2z"),
    }
    try:
        return table[name]
    except KeyError:
        raise KeyError(f"unknown map fixture {name!r}; choose from {sorted(table)}") from None


def as_complex_list(values: Iterable) -> list[complex]:
    return [complex(v) for v in values]
