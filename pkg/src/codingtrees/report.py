"""Run reports: deterministic JSON with the config hash embedded."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

SCHEMA = 1
VOLATILE = ("wall_time",)


def to_jsonable(value: Any) -> Any:
    """Plain JSON types: complex as ``[re, im]``, non-finite floats as strings."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        x = float(value)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(value, (complex, np.complexfloating)):
        return [to_jsonable(value.real), to_jsonable(value.imag)]
    if hasattr(value, "to_dict"):
        return to_jsonable(value.to_dict())
    if value is None or isinstance(value, str):
        return value
    raise TypeError(f"cannot serialise {type(value).__name__}")


def dumps(data: Any) -> str:
    return json.dumps(to_jsonable(data), sort_keys=True, indent=2, allow_nan=False, ensure_ascii=False) + "\n"


@dataclass
class RunReport:
    command: str
    config_hash: str
    seed: int
    verdicts: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        return all(bool(v) for v in self.verdicts.values())

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "command": self.command,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "passed": self.passed,
            "verdicts": self.verdicts,
            "tables": self.tables,
            "warnings": self.warnings,
            "wall_time": self.wall_time,
        }

    def dumps(self, stable: bool = False) -> str:
        """JSON text; ``stable`` drops the wall-clock field."""
        data = self.to_dict()
        if stable:
            for key in VOLATILE:
                data.pop(key, None)
        return dumps(data)

    def write(self, out_dir: str | Path, name: str | None = None) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{name or self.command.replace(' ', '-')}.json"
        path.write_text(self.dumps(), encoding="utf-8")
        return path


def strip_volatile(text: str) -> str:
    """Report text with the wall-clock field removed, for byte comparisons."""
    data = json.loads(text)
    for key in VOLATILE:
        data.pop(key, None)
    return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_csv(path: str | Path, header: list, rows: list) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, float) else x for x in row])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())
    return path
