"""Self-contained SVG figures: a raster membership background plus vector overlays."""

from __future__ import annotations

import base64
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np
from PIL import Image

from .mapcore import MapSpec, evaluate_array


@dataclass
class Frame:
    """Square viewport ``[x0, x0 + size] x [y0, y0 + size]`` drawn at ``pixels`` wide."""

    x0: float
    y0: float
    size: float
    pixels: int = 512

    def to_px(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        z = np.asarray(z, dtype=complex)
        s = self.pixels / self.size
        return (z.real - self.x0) * s, (self.y0 + self.size - z.imag) * s

    @classmethod
    def around(cls, points: np.ndarray, pad: float = 0.1, pixels: int = 512) -> "Frame":
        pts = np.asarray(points, dtype=complex)
        pts = pts[np.isfinite(pts)]
        if len(pts) == 0:
            return cls(-2.0, -2.0, 4.0, pixels)
        lo_x, hi_x = pts.real.min(), pts.real.max()
        lo_y, hi_y = pts.imag.min(), pts.imag.max()
        size = max(hi_x - lo_x, hi_y - lo_y, 1e-9) * (1 + 2 * pad)
        cx, cy = 0.5 * (lo_x + hi_x), 0.5 * (lo_y + hi_y)
        return cls(cx - size / 2, cy - size / 2, size, pixels)


def membership_raster(m: MapSpec, frame: Frame, radius: float, cap: int = 200, pixels: int = 256) -> Image.Image:
    """Grey raster of the filled Julia set by escape time (polynomials only)."""
    xs = frame.x0 + (np.arange(pixels) + 0.5) * frame.size / pixels
    ys = frame.y0 + frame.size - (np.arange(pixels) + 0.5) * frame.size / pixels
    z = (xs[None, :] + 1j * ys[:, None]).ravel()
    steps = np.full(z.shape, cap)
    live = np.ones(z.shape, dtype=bool)
    w = z.copy()
    for k in range(cap):
        with np.errstate(over="ignore", invalid="ignore"):
            out = live & ~(np.abs(w) <= radius)
        steps[out] = k
        live &= ~out
        if not live.any():
            break
        w[live] = evaluate_array(m, w[live])
    shade = np.where(steps >= cap, 40, 255 - np.minimum(steps, 40) * 3).astype(np.uint8)
    return Image.fromarray(shade.reshape(pixels, pixels), mode="L")


@dataclass
class Figure:
    frame: Frame
    title: str = ""
    metadata: dict = field(default_factory=dict)
    _layers: list = field(default_factory=list)

    def background(self, img: Image.Image) -> None:
        buf = io.BytesIO()
        img.save(buf, format="PNG", optimize=False)
        data = base64.b64encode(buf.getvalue()).decode()
        p = self.frame.pixels
        self._layers.append(
            f'<image x="0" y="0" width="{p}" height="{p}" preserveAspectRatio="none" '
            f'href="data:image/png;base64,{data}"/>'
        )

    def polyline(self, z: np.ndarray, color: str = "#1f5fbf", width: float = 0.8) -> None:
        x, y = self.frame.to_px(z)
        ok = np.isfinite(x) & np.isfinite(y)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(x[ok], y[ok]))
        if pts:
            self._layers.append(
                f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"/>'
            )

    def points(self, z: np.ndarray, color: str = "#c0392b", r: float = 2.0) -> None:
        x, y = self.frame.to_px(z)
        for a, b in zip(x, y):
            if math.isfinite(a) and math.isfinite(b):
                self._layers.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="{r}" fill="{color}"/>')

    def svg(self) -> str:
        p = self.frame.pixels
        meta = "".join(
            f'<cr:entry key="{escape(str(k))}">{escape(str(v))}</cr:entry>' for k, v in sorted(self.metadata.items())
        )
        head = (
            f'<svg xmlns="http://www.w3.org/2000/svg" xmlns:cr="urn:codingtrees" '
            f'width="{p}" height="{p}" viewBox="0 0 {p} {p}">'
        )
        title = f"<title>{escape(self.title)}</title>" if self.title else ""
        return "\n".join([head, title, f"<metadata>{meta}</metadata>", *self._layers, "</svg>"]) + "\n"

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.svg())
        return path
