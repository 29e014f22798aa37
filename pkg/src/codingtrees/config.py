"""Run configuration: YAML or JSON, complex numbers as ``[re, im]`` pairs."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .curves import Curve
from .mapcore import MapSpec, load_fixture
from .tree import CodingTree


class ConfigError(ValueError):
    """A configuration problem, located by field path and (when known) source line."""

    def __init__(self, path: str, message: str, line: int | None = None):
        self.path = path
        self.line = line
        where = f"{path}" + (f" (line {line})" if line is not None else "")
        super().__init__(f"{where}: {message}")


# ---------------------------------------------------------------------------
# sections


@dataclass
class ChartTarget:
    point: complex
    period: int = 1


@dataclass
class TelescopeConfig:
    r: float = 0.5
    delta: float = 0.1
    kappa: float = 1.0
    Delta: int = 1
    n0: int = 12
    k: int = 10
    K: int = 12
    E: int = 16


@dataclass
class RayConfig:
    center: complex = 0j
    radius: float = 4.0
    tau: float = math.pi / 2
    angles: list = field(default_factory=lambda: [0.0])  # in turns
    max_level: float = 30.0
    side: str = "cw"
    steps_per_level: int = 32
    tol: float = 1e-6


@dataclass
class MeasureConfig:
    samples: int = 100_000
    points: int = 100
    C: float = 4.0
    lam: float = 0.55
    pesin_orbits: int = 128
    held_out: int = 100
    target: float = 0.95


@dataclass
class Budgets:
    depth: int = 14
    samples: int = 512
    horizon: int = 50


@dataclass
class RunConfig:
    map: MapSpec
    tree_root: complex | None = None
    base_curves: list = field(default_factory=list)  # curve descriptors (dicts)
    charts: list = field(default_factory=list)  # ChartTarget
    telescope: TelescopeConfig = field(default_factory=TelescopeConfig)
    ray: RayConfig = field(default_factory=RayConfig)
    measure: MeasureConfig = field(default_factory=MeasureConfig)
    budgets: Budgets = field(default_factory=Budgets)
    seed: int = 0
    out: str = "out"

    # -- derived objects -------------------------------------------------

    def build_tree(self) -> CodingTree:
        if self.tree_root is None or not self.base_curves:
            raise ConfigError("tree", "the tree is empty (needs a root and base curves)")
        curves = [curve_from_dict(c, f"tree.base_curves[{i}]") for i, c in enumerate(self.base_curves)]
        return CodingTree(self.map, self.tree_root, curves)

    # -- serialisation ---------------------------------------------------

    def to_dict(self) -> dict:
        tel = asdict(self.telescope)
        ray = asdict(self.ray)
        ray["center"] = _pair(self.ray.center)
        out = {
            "map": self.map.to_dict(),
            "tree": None
            if self.tree_root is None
            else {"root": _pair(self.tree_root), "base_curves": self.base_curves},
            "charts": [{"point": _pair(c.point), "period": c.period} for c in self.charts],
            "telescope": tel,
            "ray": ray,
            "measure": asdict(self.measure),
            "budgets": asdict(self.budgets),
            "seed": self.seed,
            "out": self.out,
        }
        return out

    def hash(self) -> str:
        """SHA-256 of the canonical JSON form (outputs directory excluded)."""
        data = self.to_dict()
        data.pop("out")
        text = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _pair(z: complex) -> list:
    z = complex(z)
    return [z.real, z.imag]


# ---------------------------------------------------------------------------
# parsing


def _complex(value: Any, path: str, lines: dict) -> complex:
    if isinstance(value, bool):
        raise ConfigError(path, f"expected a number or [re, im] pair, got {value!r}", lines.get(path))
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2 and all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
    ):
        return complex(float(value[0]), float(value[1]))
    raise ConfigError(path, f"expected a number or [re, im] pair, got {value!r}", lines.get(path))


def _section(cls, data: Any, path: str, lines: dict, complex_fields: tuple = ()):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(path, "expected a mapping", lines.get(path))
    known = {f for f in cls.__dataclass_fields__}
    extra = set(data) - known
    if extra:
        name = sorted(extra)[0]
        raise ConfigError(f"{path}.{name}", f"unknown field (expected one of {sorted(known)})", lines.get(f"{path}.{name}"))
    default = cls()
    kw = {}
    for key, value in data.items():
        p = f"{path}.{key}"
        ref = getattr(default, key)
        if key in complex_fields:
            kw[key] = _complex(value, p, lines)
        elif isinstance(ref, bool):
            kw[key] = bool(value)
        elif isinstance(ref, int):
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(p, f"expected an integer, got {value!r}", lines.get(p))
            kw[key] = value
        elif isinstance(ref, float):
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError(p, f"expected a number, got {value!r}", lines.get(p))
            kw[key] = float(value)
        else:
            kw[key] = value
    return cls(**kw)


def _positive(value, path: str, lines: dict) -> None:
    if not value > 0:
        raise ConfigError(path, f"must be positive, got {value!r}", lines.get(path))


CURVE_KINDS = ("segment", "arc", "polyline")


def curve_from_dict(data: dict, path: str = "curve", lines: dict | None = None) -> Curve:
    lines = lines or {}
    if not isinstance(data, dict) or "kind" not in data:
        raise ConfigError(path, f"expected a mapping with 'kind' in {CURVE_KINDS}", lines.get(path))
    kind = data["kind"]
    if kind == "segment":
        return Curve.segment(_complex(data.get("from"), f"{path}.from", lines), _complex(data.get("to"), f"{path}.to", lines))
    if kind == "arc":
        return Curve.arc(
            _complex(data.get("from"), f"{path}.from", lines),
            _complex(data.get("to"), f"{path}.to", lines),
            float(data.get("bulge", 1.0)),
        )
    if kind == "polyline":
        pts = data.get("points")
        if not isinstance(pts, list) or len(pts) < 2:
            raise ConfigError(f"{path}.points", "expected at least two [re, im] points", lines.get(f"{path}.points"))
        return Curve.from_points([_complex(v, f"{path}.points[{i}]", lines) for i, v in enumerate(pts)])
    raise ConfigError(f"{path}.kind", f"unknown curve kind {kind!r} (expected one of {CURVE_KINDS})", lines.get(f"{path}.kind"))


def _map_from(data: Any, lines: dict) -> MapSpec:
    if isinstance(data, str):
        try:
            return load_fixture(data)
        except KeyError as exc:
            raise ConfigError("map", str(exc.args[0]), lines.get("map")) from None
    if not isinstance(data, dict):
        raise ConfigError("map", "expected a fixture name or a mapping with 'numerator'", lines.get("map"))
    if "fixture" in data:
        return _map_from(data["fixture"], lines)
    try:
        return MapSpec.from_dict(data)
    except ValueError as exc:
        raise ConfigError("map", str(exc), lines.get("map")) from None


TOP_LEVEL = ("map", "tree", "charts", "telescope", "ray", "measure", "budgets", "seed", "out")


def config_from_dict(data: Any, lines: dict | None = None) -> RunConfig:
    lines = lines or {}
    if not isinstance(data, dict):
        raise ConfigError("<root>", "expected a mapping")
    extra = set(data) - set(TOP_LEVEL)
    if extra:
        name = sorted(extra)[0]
        raise ConfigError(name, f"unknown field (expected one of {list(TOP_LEVEL)})", lines.get(name))
    if "map" not in data:
        raise ConfigError("map", "missing required field")
    m = _map_from(data["map"], lines)
    root, curves = None, []
    tree = data.get("tree")
    if tree is not None:
        if not isinstance(tree, dict):
            raise ConfigError("tree", "expected a mapping", lines.get("tree"))
        if tree.get("root") is not None:
            root = _complex(tree["root"], "tree.root", lines)
        curves = list(tree.get("base_curves") or [])
        for i, c in enumerate(curves):
            curve_from_dict(c, f"tree.base_curves[{i}]", lines)  # validate early
    charts = []
    for i, c in enumerate(data.get("charts") or []):
        p = f"charts[{i}]"
        if not isinstance(c, dict) or "point" not in c:
            raise ConfigError(p, "expected a mapping with 'point'", lines.get(p))
        period = c.get("period", 1)
        if not isinstance(period, int) or period < 1:
            raise ConfigError(f"{p}.period", "must be a positive integer", lines.get(f"{p}.period"))
        charts.append(ChartTarget(_complex(c["point"], f"{p}.point", lines), period))
    cfg = RunConfig(
        map=m,
        tree_root=root,
        base_curves=curves,
        charts=charts,
        telescope=_section(TelescopeConfig, data.get("telescope"), "telescope", lines),
        ray=_section(RayConfig, data.get("ray"), "ray", lines, ("center",)),
        measure=_section(MeasureConfig, data.get("measure"), "measure", lines),
        budgets=_section(Budgets, data.get("budgets"), "budgets", lines),
        seed=data.get("seed", 0),
        out=str(data.get("out", "out")),
    )
    validate(cfg, lines)
    return cfg


def validate(cfg: RunConfig, lines: dict | None = None) -> None:
    lines = lines or {}
    if not isinstance(cfg.seed, int) or isinstance(cfg.seed, bool) or cfg.seed < 0:
        raise ConfigError("seed", "must be a non-negative integer", lines.get("seed"))
    for name in ("depth", "samples", "horizon"):
        _positive(getattr(cfg.budgets, name), f"budgets.{name}", lines)
    for name in ("samples", "points", "pesin_orbits", "held_out", "C", "lam"):
        _positive(getattr(cfg.measure, name), f"measure.{name}", lines)
    t = cfg.telescope
    for name in ("r", "delta", "kappa", "Delta", "k", "K", "E"):
        _positive(getattr(t, name), f"telescope.{name}", lines)
    if not t.delta < t.r:
        raise ConfigError("telescope.delta", "must be smaller than telescope.r", lines.get("telescope.delta"))
    if not t.kappa <= 1:
        raise ConfigError("telescope.kappa", "must not exceed 1", lines.get("telescope.kappa"))
    r = cfg.ray
    if not 0 < r.tau < math.pi:
        raise ConfigError("ray.tau", "must lie strictly between 0 and pi", lines.get("ray.tau"))
    if r.side not in ("cw", "ccw"):
        raise ConfigError("ray.side", "must be 'cw' or 'ccw'", lines.get("ray.side"))
    for name in ("radius", "max_level", "steps_per_level", "tol"):
        _positive(getattr(r, name), f"ray.{name}", lines)
    if not isinstance(r.angles, list) or not all(isinstance(a, (int, float)) for a in r.angles):
        raise ConfigError("ray.angles", "expected a list of angles in turns", lines.get("ray.angles"))


# ---------------------------------------------------------------------------
# files


def _yaml_lines(text: str) -> dict:
    """Map dotted field paths to 1-based source lines."""
    out: dict[str, int] = {}

    def walk(node, path):
        if path:
            out.setdefault(path, node.start_mark.line + 1)
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                key = str(k.value)
                p = f"{path}.{key}" if path else key
                out[p] = k.start_mark.line + 1
                if not isinstance(v, yaml.ScalarNode):
                    walk(v, p)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                walk(v, f"{path}[{i}]")

    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return out
    if root is not None:
        walk(root, "")
    return out


def loads(text: str, fmt: str = "yaml") -> RunConfig:
    if fmt == "json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("<root>", f"JSON syntax error: {exc.msg}", exc.lineno) from None
        return config_from_dict(data)
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError("<root>", f"YAML syntax error: {getattr(exc, 'problem', exc)}", mark.line + 1 if mark else None) from None
    return config_from_dict(data, _yaml_lines(text))


def load(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config ({exc.strerror})") from None
    return loads(text, "json" if path.suffix.lower() == ".json" else "yaml")
