"""Geometric coding trees: edges, vertices, branches and their limits."""

from __future__ import annotations

import math
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .curves import (
    DEFAULT_CLEARANCE,
    DEFAULT_MAX_GAP,
    Curve,
    curve_diameter,
    lift_curve,
    lift_many,
)
from .mapcore import MapSpec, chordal, chordal_array, critical_values, evaluate_array, preimages

Word = tuple  # tuple of letters in 1..d

DEFAULT_EXHAUSTIVE_BUDGET = 2 ** 14
DEFAULT_SAMPLES = 512


class TreeError(ValueError):
    pass


class EdgeError(RuntimeError):
    def __init__(self, word: Word, cause: Exception):
        self.word = word
        self.cause = cause
        super().__init__(f"edge {format_word(word)}: {cause}")


class BranchNonConvergence(RuntimeError):
    def __init__(self, report: "CodingLimit"):
        self.report = report
        super().__init__(
            f"branch {report.address} did not converge within {report.depth} vertices "
            f"(last residual {report.residuals[-1] if report.residuals else math.nan:.3g})"
        )


def format_word(word: Sequence[int]) -> str:
    sep = "," if any(a > 9 for a in word) else ""
    return sep.join(str(a) for a in word)


def rho(a: Sequence[int], b: Sequence[int]) -> float:
    """Shift-space metric ``exp(-k)``, ``k`` the first index of disagreement."""
    for k, (x, y) in enumerate(zip(a, b)):
        if x != y:
            return math.exp(-k)
    if len(a) == len(b):
        return 0.0
    return math.exp(-min(len(a), len(b)))


def shift(word: Sequence[int]) -> Word:
    return tuple(word[1:])


@dataclass(frozen=True)
class Address:
    """Eventually periodic infinite word ``prefix + period + period + ...``."""

    prefix: tuple = ()
    period: tuple = (1,)

    def __post_init__(self):
        if not self.period:
            raise ValueError("period must be non-empty")
        pre, per = _canonical(tuple(self.prefix), tuple(self.period))
        object.__setattr__(self, "prefix", pre)
        object.__setattr__(self, "period", per)

    def letters(self, n: int) -> Word:
        out = list(self.prefix[:n])
        i = 0
        while len(out) < n:
            out.append(self.period[i % len(self.period)])
            i += 1
        return tuple(out)

    def shifted(self, k: int = 1) -> "Address":
        pre, per = self.prefix, self.period
        for _ in range(k):
            if pre:
                pre = pre[1:]
            else:
                per = per[1:] + per[:1]
        return Address(pre, per)

    @property
    def is_periodic(self) -> bool:
        return not self.prefix

    def __str__(self) -> str:
        return f"{format_word(self.prefix)}({format_word(self.period)})∞"

    def to_dict(self) -> dict:
        return {"prefix": list(self.prefix), "period": list(self.period), "text": str(self)}


def _canonical(pre: tuple, per: tuple) -> tuple[tuple, tuple]:
    # primitive period
    n = len(per)
    for p in range(1, n + 1):
        if n % p == 0 and per == per[:p] * (n // p):
            per = per[:p]
            break
    # absorb the tail of the prefix into the period
    while pre and pre[-1] == per[-1]:
        pre = pre[:-1]
        per = per[-1:] + per[:-1]
    return pre, per


def all_words(d: int, length: int) -> Iterator[Word]:
    if length == 0:
        yield ()
        return
    idx = np.indices((d,) * length).reshape(length, -1).T + 1
    for row in idx:
        yield tuple(int(a) for a in row)


class CodingTree:
    """Coding tree ``T(z, gamma^1, ..., gamma^d)`` with a bounded edge cache.

    Words are tuples ``(alpha_0, ..., alpha_n)`` over ``1..d``; ``edge(word)``
    is ``gamma_n(alpha)`` and ``vertex(word)`` its endpoint ``z_n(alpha)``.
    """

    def __init__(
        self,
        m: MapSpec,
        root: complex,
        base_curves: Sequence[Curve],
        clearance: float = DEFAULT_CLEARANCE,
        max_gap: float = DEFAULT_MAX_GAP,
        cache_size: int = 200_000,
        endpoint_tol: float = 1e-8,
    ):
        self.map = m
        self.root = complex(root)
        self.base_curves = tuple(base_curves)
        self.clearance = clearance
        self.max_gap = max_gap
        self.cache_size = cache_size
        self._cache: OrderedDict[Word, Curve] = OrderedDict()
        self._lock = threading.RLock()
        self._cvals = critical_values(m)
        self._validate(endpoint_tol)

    @property
    def d(self) -> int:
        return self.map.degree

    def _validate(self, tol: float) -> None:
        d = self.d
        if len(self.base_curves) != d:
            raise TreeError(f"full tree needs {d} base curves, got {len(self.base_curves)}")
        pre = preimages(self.map, self.root)
        if any(p.critical for p in pre):
            raise TreeError("root is a critical value; its preimages are not distinct")
        remaining = [p.point for p in pre]
        for j, c in enumerate(self.base_curves, start=1):
            if chordal(c.start, self.root) > tol:
                raise TreeError(f"gamma^{j} does not start at the root")
            dists = [chordal(c.end, p) for p in remaining]
            if not dists or min(dists) > tol:
                raise TreeError(f"gamma^{j} does not end at an unused preimage of the root")
            remaining.pop(int(np.argmin(dists)))

    # -- cache ------------------------------------------------------------

    def _get(self, word: Word) -> Curve | None:
        with self._lock:
            c = self._cache.get(word)
            if c is not None:
                self._cache.move_to_end(word)
            return c

    def _put(self, word: Word, curve: Curve) -> None:
        with self._lock:
            self._cache[word] = curve
            self._cache.move_to_end(word)
            while len(self._cache) > self.cache_size:
                self._cache.popitem(last=False)

    def clear_cache(self) -> None:
        with self._lock:
            self._cache.clear()

    def cached_words(self) -> list[Word]:
        with self._lock:
            return list(self._cache)

    # -- edges ------------------------------------------------------------

    def _check_word(self, word: Word) -> Word:
        word = tuple(int(a) for a in word)
        if not word:
            raise ValueError("word must be non-empty")
        if any(a < 1 or a > self.d for a in word):
            raise ValueError(f"letters must lie in 1..{self.d}: {word}")
        return word

    def edge(self, word: Sequence[int]) -> Curve:
        """The edge ``gamma_n(alpha)`` for ``word = (alpha_0, ..., alpha_n)``."""
        word = self._check_word(word)
        hit = self._get(word)
        if hit is not None:
            return hit
        stack = [word]
        while stack:
            w = stack[-1]
            if self._get(w) is not None:
                stack.pop()
                continue
            if len(w) == 1:
                self._put(w, self.base_curves[w[0] - 1])
                stack.pop()
                continue
            parent, prev = w[1:], w[:-1]
            pc, vc = self._get(parent), self._get(prev)
            if pc is None or vc is None:
                stack.extend(x for x, c in ((parent, pc), (prev, vc)) if c is None)
                continue
            try:
                lifted = lift_curve(
                    self.map, pc, vc.end, self.clearance, self.max_gap, _cvals=self._cvals
                )
            except Exception as exc:  # attach the word
                raise EdgeError(w, exc) from exc
            self._put(w, lifted)
            stack.pop()
        return self._get(word) or self.edge(word)

    def vertex(self, word: Sequence[int]) -> complex:
        return self.edge(word).end

    def _expand(self, todo: list) -> None:
        """Batch-lift one generation whose parents are (mostly) cached."""
        todo = [w for w in todo if self._get(w) is None]
        if not todo:
            return
        if len(todo[0]) == 1:
            for w in todo:
                self._put(w, self.base_curves[w[0] - 1])
            return
        parents = [self.edge(w[1:]) for w in todo]
        starts = [self.vertex(w[:-1]) for w in todo]
        try:
            lifted = lift_many(self.map, parents, starts, self.clearance, self.max_gap)
        except Exception:
            # fall back to one-by-one so the failing word is reported
            for w in todo:
                self.edge(w)
            return
        for w, c in zip(todo, lifted):
            self._put(w, c)

    def ensure(self, words: Iterable[Sequence[int]]) -> None:
        """Compute the given edges, and everything they depend on, level by level."""
        need: dict[int, set] = {}
        for w in words:
            w = self._check_word(w)
            n = len(w)
            for i in range(n):
                for j in range(i + 1, n + 1):
                    need.setdefault(j - i, set()).add(w[i:j])
        for length in sorted(need):
            self._expand(sorted(need[length]))

    def level_words(
        self,
        n: int,
        budget: int = DEFAULT_EXHAUSTIVE_BUDGET,
        samples: int = DEFAULT_SAMPLES,
        rng: np.random.Generator | None = None,
    ) -> tuple[list[Word], bool]:
        """Words of generation ``n`` (length ``n+1``): all of them, or a uniform sample."""
        if self.d ** (n + 1) <= budget:
            return list(all_words(self.d, n + 1)), True
        rng = rng if rng is not None else np.random.default_rng(0)
        letters = rng.integers(1, self.d + 1, size=(samples, n + 1))
        return [tuple(int(a) for a in row) for row in letters], False

    def level_edges(
        self,
        n: int,
        budget: int = DEFAULT_EXHAUSTIVE_BUDGET,
        samples: int = DEFAULT_SAMPLES,
        rng: np.random.Generator | None = None,
    ) -> tuple[list[Word], list[Curve], bool]:
        words, exhaustive = self.level_words(n, budget, samples, rng)
        if exhaustive:
            for k in range(n + 1):
                self._expand(list(all_words(self.d, k + 1)))
        else:
            self.ensure(words)
        return words, [self.edge(w) for w in words], exhaustive


@dataclass(frozen=True)
class ConsistencyReport:
    edges: int
    functional: float  # max chordal |f(gamma(alpha)(t)) - gamma(shift alpha)(t)|
    concatenation: float  # max chordal gap between consecutive edges of a branch
    worst_word: Word = ()

    def to_dict(self) -> dict:
        return {
            "edges": self.edges,
            "functional": self.functional,
            "concatenation": self.concatenation,
            "worst_word": format_word(self.worst_word),
        }


def tree_consistency(tree: CodingTree, words: Iterable[Sequence[int]] | None = None) -> ConsistencyReport:
    """Check the functional equation and concatenation on cached (or given) edges.

    The comparison for ``f(gamma(alpha))`` reads the shifted edge at the
    same curve parameters, independently of how the edge was produced.
    """
    words = [tuple(w) for w in (words if words is not None else tree.cached_words())]
    func = conc = 0.0
    worst: Word = ()
    for w in words:
        c = tree.edge(w)
        if len(w) > 1:
            base = tree.edge(w[1:])
            r = float(np.max(chordal_array(evaluate_array(tree.map, c.z), base(c.t))))
            if r > func:
                func, worst = r, w
            conc = max(conc, chordal(c.start, tree.edge(w[:-1]).end))
        else:
            conc = max(conc, chordal(c.start, tree.root))
    return ConsistencyReport(len(words), func, conc, worst)


# ---------------------------------------------------------------------------
# queries
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProfileRow:
    n: int
    max_diameter: float
    words: int
    exhaustive: bool


def diameter_profile(
    tree: CodingTree,
    depth: int,
    budget: int = DEFAULT_EXHAUSTIVE_BUDGET,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
) -> list[ProfileRow]:
    """Maximum observed edge diameter per generation ``0..depth``."""
    if depth < 0:
        raise ValueError("depth must be >= 0")
    rng = np.random.default_rng(seed)
    rows = []
    for n in range(depth + 1):
        words, curves, exhaustive = tree.level_edges(n, budget, samples, rng)
        rows.append(ProfileRow(n, max(curve_diameter(c) for c in curves), len(words), exhaustive))
    return rows


@dataclass(frozen=True)
class NEpsilon:
    value: int
    eps: float
    budget: int
    trustworthy: bool
    empty: bool


def n_epsilon(
    tree: CodingTree,
    eps: float,
    budget_depth: int = 20,
    profile: Sequence[ProfileRow] | None = None,
    seed: int = 0,
) -> NEpsilon:
    """``N(eps) = sup{n <= budget : some sampled gamma_n has diameter >= eps}``.

    ``trustworthy`` is false when the sup sits at the budget boundary, in
    which case the value is only a lower bound.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    rows = profile if profile is not None else diameter_profile(tree, budget_depth, seed=seed)
    rows = [r for r in rows if r.n <= budget_depth]
    hits = [r.n for r in rows if r.max_diameter >= eps]
    if not hits:
        return NEpsilon(0, eps, budget_depth, True, True)
    top = max(hits)
    return NEpsilon(top, eps, budget_depth, top < budget_depth, False)


@dataclass
class CodingLimit:
    address: str
    point: complex
    converged: bool
    depth: int
    residuals: list = field(default_factory=list)
    vertices: list = field(default_factory=list)


def branch_vertices(tree: CodingTree, address: Address, count: int) -> list[complex]:
    """``z_0(alpha), ..., z_{count-1}(alpha)``."""
    out = []
    for n in range(count):
        out.append(tree.vertex(address.letters(n + 1)))
    return out


def coding_limit(
    tree: CodingTree,
    address: Address,
    tol: float = 1e-11,
    cap: int = 400,
    streak: int = 5,
    raise_on_failure: bool = True,
) -> CodingLimit:
    """Follow the vertices of ``b(alpha)`` until they settle to within ``tol``.

    Convergence means ``streak`` consecutive chordal steps below ``tol``.
    """
    verts = [tree.vertex(address.letters(1))]
    residuals: list[float] = []
    run = 0
    for n in range(1, cap):
        verts.append(tree.vertex(address.letters(n + 1)))
        r = chordal(verts[-1], verts[-2])
        residuals.append(r)
        run = run + 1 if r < tol else 0
        if run >= streak:
            return CodingLimit(str(address), verts[-1], True, n + 1, residuals, verts)
    rep = CodingLimit(str(address), verts[-1], False, cap, residuals, verts)
    if raise_on_failure:
        raise BranchNonConvergence(rep)
    return rep


def limit_set_sample(
    tree: CodingTree,
    depth: int,
    budget: int = DEFAULT_EXHAUSTIVE_BUDGET,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
) -> np.ndarray:
    """Vertices ``z_depth(alpha)`` over all (or sampled) words."""
    rng = np.random.default_rng(seed)
    words, curves, _ = tree.level_edges(depth, budget, samples, rng)
    return np.array([c.end for c in curves], dtype=complex)


def inverse_iteration_cloud(m: MapSpec, root: complex, depth: int) -> np.ndarray:
    """All of ``f^{-(depth+1)}(root)`` by plain repeated preimages (no curves)."""
    from .mapcore import preimage_roots

    pts = np.array([root], dtype=complex)
    for _ in range(depth + 1):
        pts = preimage_roots(m, pts).ravel()
    return pts


def hausdorff_chordal(a: np.ndarray, b: np.ndarray) -> float:
    def one_side(x, y):
        worst = 0.0
        for i in range(0, len(x), 512):
            d = chordal_array(x[i : i + 512, None], y[None, :])
            worst = max(worst, float(np.max(np.min(d, axis=1))))
        return worst

    return max(one_side(a, b), one_side(b, a))
