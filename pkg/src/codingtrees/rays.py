"""Polynomial-like maps, the level function ``M`` and tau-rays.

``W`` is a round disk ``|z - c| < R`` and ``W1 = f^{-1}(W)``.  On the
fundamental annulus ``cl W \\ W1`` we fit the harmonic function ``u`` with
``u = 1`` on ``dW`` and ``u = 1/d`` on ``dW1`` and set ``M0 = -log_d u``, so
``M0 = 0`` on ``dW`` and ``M0 = 1`` on ``dW1``.  ``M`` is extended inward by
``M(z) = M0(f^n z) + n``.  A tau-ray crosses every level line of ``M`` at the
angle ``tau`` and is integrated with ``M`` itself as the parameter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .curves import Curve, lift_curve
from .mapcore import MapSpec, chordal_array, critical_values, preimage_roots
from .pullback import winding_number

DEFAULT_ORDER = 40
DEFAULT_BOUNDARY_SAMPLES = 256
ESCAPE_CAP = 400


class InvalidPolyLike(ValueError):
    pass


class StuckAtSaddle(RuntimeError):
    def __init__(self, message: str, data: dict):
        super().__init__(message)
        self.data = data


class LevelStall(RuntimeError):
    pass


def _horner(c: tuple, z: complex) -> complex:
    out = c[-1]
    for a in c[-2::-1]:
        out = out * z + a
    return out


# ---------------------------------------------------------------------------
# polynomial-like maps


@dataclass
class PolyLikeSpec:
    """A polynomial restricted to ``W1 = f^{-1}(W)`` with ``W`` a round disk."""

    map: MapSpec
    center: complex
    radius: float
    boundary_w1: np.ndarray  # closed polygon (last vertex joins the first)
    margin: float

    @property
    def degree(self) -> int:
        return self.map.degree

    def in_w(self, z) -> np.ndarray:
        return np.abs(np.asarray(z, dtype=complex) - self.center) < self.radius

    def in_w1(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        return self.in_w(z) & (np.abs(self.map_array(z) - self.center) < self.radius)

    def map_array(self, z: np.ndarray) -> np.ndarray:
        c = self.map.numerator
        out = np.zeros_like(z) + c[-1]
        for a in c[-2::-1]:
            out = out * z + a
        return out

    def boundary_w(self, n: int = DEFAULT_BOUNDARY_SAMPLES) -> np.ndarray:
        return self.center + self.radius * np.exp(2j * math.pi * np.arange(n) / n)

    def in_k(self, z, cap: int = ESCAPE_CAP) -> np.ndarray:
        """Escape-time membership in ``K``: the orbit never leaves ``W`` within ``cap`` steps."""
        w = np.array(z, dtype=complex, ndmin=1)
        inside = np.ones(w.shape, dtype=bool)
        for _ in range(cap):
            with np.errstate(over="ignore", invalid="ignore"):
                inside &= np.abs(w - self.center) < self.radius
            if not inside.any():
                break
            w[inside] = self.map_array(w[inside])
        return inside

    def to_dict(self) -> dict:
        return {
            "W": {"center": [self.center.real, self.center.imag], "radius": self.radius},
            "degree": self.degree,
            "margin": self.margin,
        }


def poly_like(m: MapSpec, center: complex, radius: float, samples: int = DEFAULT_BOUNDARY_SAMPLES) -> PolyLikeSpec:
    """Validate ``f: f^{-1}(W) -> W`` as a polynomial-like map and trace ``dW1``."""
    if not m.is_polynomial:
        raise InvalidPolyLike("only polynomial maps are supported")
    d = m.degree
    if d < 2:
        raise InvalidPolyLike("degree must be at least 2")
    center = complex(center)
    radius = float(radius)
    if not radius > 0:
        raise InvalidPolyLike("radius must be positive")
    for v in critical_values(m):
        if np.isfinite(v) and not abs(v - center) < radius:
            # W1 would be disconnected and W \ W1 not an annulus
            raise InvalidPolyLike(f"critical value {v} lies outside W")
    # properness: every sampled w in W has all d preimages inside W
    rng = np.random.default_rng(0)
    w = center + radius * np.sqrt(rng.random(256)) * np.exp(2j * math.pi * rng.random(256))
    w = np.concatenate([w, center + radius * np.exp(2j * math.pi * np.arange(64) / 64)])
    roots = preimage_roots(m, w)
    if roots.shape[1] != d:
        raise InvalidPolyLike("preimage count does not match the degree")
    far = float(np.max(np.abs(roots - center)))
    if not far < radius:
        raise InvalidPolyLike("W1 is not compactly contained in W")
    boundary = _lift_circle(m, center, radius, samples)
    margin = radius - float(np.max(np.abs(boundary - center)))
    if margin <= 0:
        raise InvalidPolyLike("W1 is not compactly contained in W")
    return PolyLikeSpec(m, center, radius, boundary, margin)


def _lift_circle(m: MapSpec, center: complex, radius: float, samples: int) -> np.ndarray:
    circle = Curve.circle(center, radius, samples)
    starts = preimage_roots(m, np.array([circle.z[0]]))[0]
    s = complex(starts[int(np.argmax(starts.real))])
    pieces, cur = [], s
    for _ in range(m.degree):
        c = lift_curve(m, circle, cur)
        pieces.append(c.z[:-1])
        cur = complex(c.end)
        if abs(cur - s) < 1e-9 * radius:
            break
    poly = np.concatenate(pieces)
    if abs(cur - s) >= 1e-9 * radius or abs(winding_number(poly, center)) != 1:
        raise InvalidPolyLike("preimage of dW is not a single Jordan curve around the center")
    return poly


# ---------------------------------------------------------------------------
# level function


@dataclass
class LevelSample:
    value: float
    grad: complex  # dM = Re(conj(grad) dz)
    depth: int  # number of applications of f used
    d1: complex  # (f^n)'(z)
    d2: complex  # (f^n)''(z)
    image: complex  # f^n(z)


@dataclass
class PotentialM:
    spec: PolyLikeSpec
    coef: np.ndarray  # complex coefficients of the basis functions
    order: int
    inner_radius: float
    boundary_residual: float
    functional_residual: float = math.nan
    max_depth: int = 2000

    # -- base annulus --------------------------------------------------------

    def _basis(self, w: np.ndarray) -> np.ndarray:
        R, r1, K = self.spec.radius, self.inner_radius, self.order
        cols = [np.ones_like(w), np.log(np.abs(w)) + 0j]
        for k in range(1, K + 1):
            cols.append((w / R) ** k)
        for k in range(1, K + 1):
            cols.append((r1 / w) ** k)
        return np.stack(cols, axis=-1)

    def _u0(self, z: np.ndarray) -> np.ndarray:
        w = np.asarray(z, dtype=complex) - self.spec.center
        return np.real(self._basis(w) @ self.coef)

    def _grad_u0(self, z: np.ndarray) -> np.ndarray:
        # u = Re F with F holomorphic away from the log term; grad u = conj(F')
        w = np.asarray(z, dtype=complex) - self.spec.center
        R, r1, K = self.spec.radius, self.inner_radius, self.order
        c = self.coef
        dF = c[1] / w
        for k in range(1, K + 1):
            dF = dF + c[1 + k] * k * (w / R) ** (k - 1) / R
            dF = dF - c[1 + K + k] * k * (r1 / w) ** k / w
        return np.conj(dF)

    def m0(self, z):
        u = self._u0(z)
        with np.errstate(divide="ignore", invalid="ignore"):
            return -np.log(u) / math.log(self.spec.degree)

    def grad_m0(self, z):
        u = self._u0(z)
        return -self._grad_u0(z) / (u * math.log(self.spec.degree))

    # -- full extension ------------------------------------------------------

    def sample(self, z: complex) -> LevelSample:
        """``M`` with its gradient and the derivatives of the iterate used."""
        c, R = self.spec.center, self.spec.radius
        p = self.spec.map.numerator
        dp = tuple(k * p[k] for k in range(1, len(p)))
        ddp = tuple(k * dp[k] for k in range(1, len(dp)))
        z = complex(z)
        if not abs(z - c) <= R * (1 + 1e-9):
            return LevelSample(math.nan, complex(math.nan), 0, 1, 0, z)
        w, d1, d2, n = z, 1 + 0j, 0j, 0
        while True:
            fw = _horner(p, w)
            if not abs(fw - c) < R:
                break
            f1 = _horner(dp, w)
            f2 = _horner(ddp, w) if ddp else 0j
            d1, d2 = f1 * d1, f2 * d1 * d1 + f1 * d2
            w, n = fw, n + 1
            if n >= self.max_depth:
                return LevelSample(math.inf, 0j, n, d1, d2, w)
        u, gu = self._u0_scalar(w)
        ld = math.log(self.spec.degree)
        value = (-math.log(u) / ld if u > 0 else math.nan) + n
        grad = d1.conjugate() * (-gu / (u * ld))
        return LevelSample(value, grad, n, d1, d2, w)

    def _split_coef(self) -> None:
        K = self.order
        self._pos = [complex(c) for c in self.coef[2 : 2 + K]]
        self._neg = [complex(c) for c in self.coef[2 + K :]]

    def _u0_scalar(self, z: complex) -> tuple[float, complex]:
        """``u`` and its gradient at one point (Horner in ``w/R`` and ``r1/w``)."""
        if not hasattr(self, "_pos"):
            self._split_coef()
        w = complex(z) - self.spec.center
        R, r1 = self.spec.radius, self.inner_radius
        x, y = w / R, r1 / w
        # P(x) = sum a_k x^k and P'(x), k = 1..K
        p = dp = 0j
        for a in reversed(self._pos):
            dp = dp * x + p
            p = p * x + a
        p, dp = p * x, dp * x + p
        q = dq = 0j
        for b in reversed(self._neg):
            dq = dq * y + q
            q = q * y + b
        q, dq = q * y, dq * y + q
        c0, c1 = self.coef[0].real, self.coef[1].real
        u = c0 + c1 * math.log(abs(w)) + p.real + q.real
        dF = c1 / w + dp / R - dq * y / w
        return u, dF.conjugate()

    def __call__(self, z) -> np.ndarray:
        z = np.array(z, dtype=complex, ndmin=1)
        return np.array([self.sample(x).value for x in z.ravel()]).reshape(z.shape)

    def grad(self, z) -> np.ndarray:
        z = np.array(z, dtype=complex, ndmin=1)
        return np.array([self.sample(x).grad for x in z.ravel()]).reshape(z.shape)

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "boundary_residual": self.boundary_residual,
            "functional_residual": self.functional_residual,
        }


def build_potential(
    spec: PolyLikeSpec,
    order: int = DEFAULT_ORDER,
    samples: int = DEFAULT_BOUNDARY_SAMPLES,
    test_points: int = 1000,
    seed: int = 0,
) -> PotentialM:
    """Least-squares harmonic fit of ``u`` on the fundamental annulus, then ``M = -log_d u``.

    The basis is ``1, log|w|`` and the real and imaginary parts of ``(w/R)^k``
    and ``(r1/w)^k`` for ``k <= order`` (``w = z - c``, ``r1`` the inner radius
    of ``dW1``), which spans harmonic functions on the annulus.
    """
    d = spec.degree
    outer = spec.boundary_w(samples)
    # exact samples of dW1: every preimage of a sample of dW
    inner = preimage_roots(spec.map, outer).ravel()
    r1 = float(np.min(np.abs(spec.boundary_w1 - spec.center)))
    pot = PotentialM(spec, np.zeros(2 + 2 * order, dtype=complex), order, r1, math.nan)
    pts = np.concatenate([outer, inner])
    target = np.concatenate([np.ones(len(outer)), np.full(len(inner), 1.0 / d)])
    B = pot._basis(pts - spec.center)
    # real design matrix: Re(gamma * phi) = Re(gamma) Re(phi) - Im(gamma) Im(phi)
    A = np.concatenate([B.real, -B.imag], axis=1)
    keep = np.ones(A.shape[1], dtype=bool)
    keep[2 + 2 * order] = keep[2 + 2 * order + 1] = False  # Im parts of the real basis functions
    sol, *_ = np.linalg.lstsq(A[:, keep], target, rcond=None)
    full = np.zeros(A.shape[1])
    full[keep] = sol
    n = B.shape[1]
    pot.coef = full[:n] + 1j * full[n:]
    pot._split_coef()
    with np.errstate(divide="ignore", invalid="ignore"):
        m_out = pot.m0(outer)
        m_in = pot.m0(inner)
    pot.boundary_residual = float(max(np.max(np.abs(m_out)), np.max(np.abs(m_in - 1.0))))
    if not np.isfinite(pot.boundary_residual) or pot.boundary_residual > 1e-3:
        raise RuntimeError(f"harmonic fit did not converge (boundary residual {pot.boundary_residual:.3g})")
    pot.functional_residual = functional_residual(pot, test_points, seed)
    return pot


def functional_residual(pot: PotentialM, n: int = 1000, seed: int = 0) -> float:
    """``max |M(f z) - (M(z) - 1)|`` on random points of ``W1 \\ K``."""
    spec = pot.spec
    rng = np.random.default_rng(seed)
    found: list = []
    while len(found) < n:
        z = spec.center + spec.radius * np.sqrt(rng.random(4 * n)) * np.exp(2j * math.pi * rng.random(4 * n))
        ok = spec.in_w1(z) & ~spec.in_k(z)
        found.extend(z[ok].tolist())
    z = np.array(found[:n])
    lhs = pot(spec.map_array(z))
    rhs = pot(z) - 1.0
    good = np.isfinite(lhs) & np.isfinite(rhs)
    return float(np.max(np.abs(lhs[good] - rhs[good]))) if good.any() else math.nan


# ---------------------------------------------------------------------------
# tau-rays


@dataclass
class SaddleCrossing:
    point: complex
    level: float
    incoming: float  # direction angles, radians
    outgoing: float
    side: str
    quadratic_form: list  # [[Mxx, Mxy], [Mxy, Myy]] from finite differences

    def to_dict(self) -> dict:
        return {
            "point": [self.point.real, self.point.imag],
            "level": self.level,
            "incoming": self.incoming,
            "outgoing": self.outgoing,
            "side": self.side,
            "quadratic_form": self.quadratic_form,
        }


@dataclass
class TauRay:
    tau: float
    start: complex
    levels: np.ndarray
    points: np.ndarray
    saddles: list = field(default_factory=list)
    status: str = "max-level"

    @property
    def max_level(self) -> float:
        return float(self.levels[-1])

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "start": [self.start.real, self.start.imag],
            "status": self.status,
            "points": [[float(l), float(z.real), float(z.imag)] for l, z in zip(self.levels, self.points)],
            "saddles": [s.to_dict() for s in self.saddles],
        }


def _direction(grad: complex, tau: float) -> complex:
    """``dz/dM`` for the field crossing level lines at angle ``tau``."""
    g = abs(grad)
    return (grad / g) * complex(math.cos(tau - math.pi / 2), math.sin(tau - math.pi / 2)) / (g * math.sin(tau))


def _quadratic_form(pot: PotentialM, s: complex, h: float) -> list:
    m = lambda dz: pot.sample(s + dz).value  # noqa: E731
    m0 = m(0)
    mxx = (m(h) - 2 * m0 + m(-h)) / h**2
    myy = (m(1j * h) - 2 * m0 + m(-1j * h)) / h**2
    mxy = (m(h + 1j * h) - m(h - 1j * h) - m(-h + 1j * h) + m(-h - 1j * h)) / (4 * h**2)
    return [[mxx, mxy], [mxy, myy]]


def _exit_direction(pot: PotentialM, s: complex, rho: float, incoming: float, side: str) -> tuple[float, list]:
    """Ascending direction at the saddle ``s`` closest to ``incoming`` in the rotational sense ``side``."""
    n = 720
    phi = 2 * math.pi * np.arange(n) / n
    base = pot.sample(s).value
    vals = pot(s + rho * np.exp(1j * phi)) - base
    ups = []
    for i in range(n):
        a, b, c = vals[i - 1], vals[i], vals[(i + 1) % n]
        if b > 0 and b >= a and b > c:
            den = a - 2 * b + c
            off = 0.5 * (a - c) / den if den != 0 else 0.0
            ups.append((phi[i] + off * 2 * math.pi / n) % (2 * math.pi))
    qf = _quadratic_form(pot, s, rho)
    if not ups:
        raise StuckAtSaddle("no ascending direction at the saddle", {"point": [s.real, s.imag], "quadratic_form": qf})
    if side == "cw":
        dist = [((incoming - u) % (2 * math.pi)) for u in ups]
    else:
        dist = [((u - incoming) % (2 * math.pi)) for u in ups]
    order = np.argsort(dist)
    best = dist[order[0]]
    tie = len(ups) > 1 and abs(dist[order[1]] - best) < 1e-9
    if best < 1e-6 or best > 2 * math.pi - 1e-6 or tie:
        raise StuckAtSaddle(
            "separatrix choice is ambiguous",
            {"point": [s.real, s.imag], "incoming": incoming, "ascending": ups, "quadratic_form": qf},
        )
    return ups[order[0]], qf


def trace_ray(
    pot: PotentialM,
    tau: float,
    start: complex,
    max_level: float,
    steps_per_level: int = 32,
    side: str = "cw",
    saddle_radius: float = 1e-5,
) -> TauRay:
    """Integrate the tau-ray from ``start`` on ``dW`` up to level ``max_level``.

    ``M`` is the integration parameter.  Steps never straddle an integer
    level, and after every RK4 step the point is projected back onto its
    target level, so the recorded levels are exact and every integer level
    appears as a sample.  Near a critical point of ``M`` (a preimage of an
    escaping critical point of ``f``) the spatial step is capped by the
    distance to it; on arrival the ray leaves along the ascending direction
    closest to the incoming one, clockwise or counter-clockwise per ``side``
    (the same side on every hit).
    """
    if not 0 < tau < math.pi:
        raise ValueError("tau must lie in (0, pi)")
    if side not in ("cw", "ccw"):
        raise ValueError("side must be 'cw' or 'ccw'")
    spec = pot.spec
    start = complex(start)
    if abs(abs(start - spec.center) - spec.radius) > 1e-9 * spec.radius:
        raise ValueError("start must lie on dW")
    h_nom = 1.0 / steps_per_level

    def field_at(z: complex) -> complex:
        smp = pot.sample(z)
        if not np.isfinite(smp.value) or smp.grad == 0:
            raise LevelStall(f"left the domain of M at {z}")
        return _direction(smp.grad, tau)

    def project(z: complex, target: float) -> complex:
        for _ in range(4):
            smp = pot.sample(z)
            if not np.isfinite(smp.value):
                raise LevelStall(f"left the domain of M at {z}")
            err = smp.value - target
            if abs(err) < 1e-14 * max(1.0, abs(target)):
                break
            z = z - err * smp.grad / abs(smp.grad) ** 2
        return z

    z = start
    level = 0.0
    z = project(z, level)
    levels, points, saddles = [level], [z], []
    status = "max-level"
    while level < max_level - 1e-12:
        nxt = min(level + h_nom, math.floor(level + 1e-9) + 1.0, max_level)
        smp = pot.sample(z)
        if smp.d2 != 0 and smp.depth > 0:
            s_est = z - smp.d1 / smp.d2
            dist = abs(z - s_est)
            # local scale on which M changes by O(1) around the saddle
            g0 = abs(smp.grad) / max(abs(smp.d1), 1e-300)
            scale = 1.0 / math.sqrt(max(abs(smp.d2) * g0, 1e-300))
            v = field_at(z)
            if dist < 0.5 * scale:
                if dist < saddle_radius * scale:
                    s = _polish_saddle(pot, s_est)
                    rho = saddle_radius * scale
                    # direction of approach, from the last sample clear of the saddle
                    back = next((p for p in reversed(points) if abs(p - s) > 2 * rho), points[0])
                    incoming = math.atan2((back - s).imag, (back - s).real)
                    out, qf = _exit_direction(pot, s, rho, incoming, side)
                    z = s + 2 * rho * complex(math.cos(out), math.sin(out))
                    new_level = pot.sample(z).value
                    s_level = pot.sample(s).value
                    saddles.append(SaddleCrossing(s, s_level, incoming, out, side, qf))
                    # samples projected past the saddle level are artefacts of the approach
                    while len(levels) > 1 and levels[-1] >= s_level:
                        levels.pop()
                        points.pop()
                    if not new_level > levels[-1]:
                        raise LevelStall("no level gain across the saddle")
                    level = new_level
                    levels.append(level)
                    points.append(z)
                    continue
                cap = 0.3 * dist
                if abs(v) * (nxt - level) > cap:
                    nxt = level + cap / abs(v)
        hstep = nxt - level
        k1 = field_at(z)
        k2 = field_at(z + 0.5 * hstep * k1)
        k3 = field_at(z + 0.5 * hstep * k2)
        k4 = field_at(z + hstep * k3)
        z_new = project(z + hstep * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0, nxt)
        if z_new == z or not nxt > level:
            raise LevelStall(f"M stopped increasing at level {level}")
        z, level = z_new, nxt
        levels.append(level)
        points.append(z)
    return TauRay(float(tau), start, np.array(levels), np.array(points), saddles, status)


def _polish_saddle(pot: PotentialM, s: complex) -> complex:
    for _ in range(8):
        smp = pot.sample(s)
        if smp.d2 == 0:
            break
        step = smp.d1 / smp.d2
        s = s - step
        if abs(step) < 1e-15 * max(1.0, abs(s)):
            break
    return s


# ---------------------------------------------------------------------------
# pieces and landing


@dataclass
class RayPiece:
    n: int
    points: np.ndarray
    length: float


def ray_pieces(ray: TauRay) -> list[RayPiece]:
    """Split the ray at integer levels; piece ``n`` joins level ``n`` to ``n + 1``."""
    out = []
    top = int(math.floor(ray.max_level + 1e-9))
    for n in range(top):
        sel = (ray.levels >= n - 1e-9) & (ray.levels <= n + 1 + 1e-9)
        pts = ray.points[sel]
        out.append(RayPiece(n, pts, float(np.sum(np.abs(np.diff(pts))))))
    return out


def piece_decay(pieces: list[RayPiece], lag: int = 5) -> dict:
    """The ``length(gamma_{n+lag}) < length(gamma_n)`` trend across the traced range."""
    lengths = [p.length for p in pieces]
    pairs = [(n, lengths[n], lengths[n + lag]) for n in range(len(lengths) - lag)]
    return {
        "lag": lag,
        "lengths": lengths,
        "holds": bool(pairs) and all(b < a for _, a, b in pairs),
        "violations": [n for n, a, b in pairs if not b < a],
    }


@dataclass
class Landing:
    landed: bool
    point: complex | None
    spread: float
    distance_to_k: float | None
    reason: str

    def to_dict(self) -> dict:
        return {
            "landed": self.landed,
            "point": None if self.point is None else [self.point.real, self.point.imag],
            "spread": self.spread,
            "distance_to_K": self.distance_to_k,
            "reason": self.reason,
            "verdict": "finite-precision",
        }


def landing(ray: TauRay, spec: PolyLikeSpec | None = None, tol: float = 1e-6, window: int = 32) -> Landing:
    """Landing verdict from the last ``window`` ray points."""
    if len(ray.points) < window:
        return Landing(False, None, math.inf, None, f"insufficient window ({len(ray.points)} < {window} points)")
    tail = ray.points[-window:]
    spread = float(np.max(chordal_array(tail[:, None], tail[None, :])))
    if not spread < tol:
        return Landing(False, None, spread, None, "tail points have not settled")
    point = complex(np.mean(tail))
    dist = _distance_to_k(spec, point, tol) if spec is not None else None
    return Landing(True, point, spread, dist, "tail spread below tolerance")


def _distance_to_k(spec: PolyLikeSpec, z: complex, tol: float, samples: int = 64) -> float:
    """Radius of the smallest sampled circle around ``z`` meeting ``K`` (escape-time oracle)."""
    if spec.in_k(np.array([z]))[0]:
        return 0.0
    r = tol * 1e-3
    ring = np.exp(2j * math.pi * np.arange(samples) / samples)
    while r < spec.radius:
        if spec.in_k(z + r * ring).any():
            return r
        r *= 2.0
    return math.inf
