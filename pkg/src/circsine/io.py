"""Output helpers: versioned CSV, a minimal SVG writer and run manifests."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import scipy

from . import __version__

SCHEMA = 1
OUTDIR_ENV = "CIRCSINE_OUTDIR"


def resolve_outdir(configured: str) -> Path:
    return Path(os.environ.get(OUTDIR_ENV) or configured)


def _fmt(v):
    if isinstance(v, (np.bool_, bool)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return repr(v) if math.isfinite(v) else str(v)
    if isinstance(v, np.integer):
        return str(int(v))
    if v is None:
        return ""
    return str(v)


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[dict | Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema={SCHEMA}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            if isinstance(row, dict):
                row = [row.get(c) for c in columns]
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path) as fh:
        first = fh.readline().strip()
        if first != f"# schema={SCHEMA}":
            raise ValueError(f"unexpected schema line {first!r}")
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


class Svg:
    """Tiny SVG builder with a fixed numeric format so output is byte-stable."""

    def __init__(self, width: int = 640, height: int = 640):
        self.width = width
        self.height = height
        self.items: list[str] = []

    def polyline(self, xs, ys, stroke="#1f4e79", width=0.8, opacity=1.0):
        pts = " ".join(f"{x:.3f},{y:.3f}" for x, y in zip(xs, ys))
        self.items.append(f'<polyline fill="none" stroke="{stroke}" stroke-width="{width}" '
                          f'stroke-opacity="{opacity}" points="{pts}"/>')

    def circle(self, cx, cy, r, fill="none", stroke="#000", width=1.0):
        self.items.append(f'<circle cx="{cx:.3f}" cy="{cy:.3f}" r="{r:.3f}" fill="{fill}" '
                          f'stroke="{stroke}" stroke-width="{width}"/>')

    def text(self, x, y, s, size=12):
        self.items.append(f'<text x="{x:.1f}" y="{y:.1f}" font-size="{size}" font-family="sans-serif">{s}</text>')

    def render(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
                f'viewBox="0 0 {self.width} {self.height}">')
        return "\n".join([head, f'<rect width="{self.width}" height="{self.height}" fill="white"/>',
                          *self.items, "</svg>"]) + "\n"

    def save(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.render())
        return path


def loglog_plot(xs, series: dict[str, Sequence[float]], title: str, xlabel: str, ylabel: str) -> Svg:
    """Log-log scatter/line plot of positive data."""
    svg = Svg(640, 480)
    left, right, top, bottom = 70, 620, 40, 420
    lx = np.log10(np.asarray(xs, float))
    all_y = np.concatenate([np.asarray(v, float) for v in series.values()])
    all_y = all_y[all_y > 0]
    ly_min, ly_max = np.log10(all_y.min()), np.log10(all_y.max())
    if ly_max - ly_min < 1e-9:
        ly_min, ly_max = ly_min - 0.5, ly_max + 0.5
    x0, x1 = lx.min(), lx.max() if lx.max() > lx.min() else lx.min() + 1

    def px(v):
        return left + (v - x0) / (x1 - x0) * (right - left)

    def py(v):
        return bottom - (v - ly_min) / (ly_max - ly_min) * (bottom - top)

    svg.polyline([left, left, right], [top, bottom, bottom], stroke="#000", width=1.0)
    colors = ["#1f4e79", "#c0504d", "#4f8f3a", "#8064a2"]
    for i, (name, ys) in enumerate(series.items()):
        ys = np.asarray(ys, float)
        ok = ys > 0
        col = colors[i % len(colors)]
        svg.polyline(px(lx[ok]), py(np.log10(ys[ok])), stroke=col, width=1.5)
        for a, b in zip(px(lx[ok]), py(np.log10(ys[ok]))):
            svg.circle(a, b, 3, fill=col, stroke=col)
        svg.text(right - 150, top + 16 * (i + 1), name, 11)
    svg.text(left, 24, title, 14)
    svg.text((left + right) / 2 - 40, 460, xlabel, 12)
    svg.text(8, top - 8, ylabel, 12)
    for v in np.arange(np.ceil(ly_min), np.floor(ly_max) + 1):
        svg.text(8, py(v) + 4, f"1e{int(v)}", 10)
    for v, raw in zip(lx, xs):
        svg.text(px(v) - 8, bottom + 16, f"{raw:g}", 10)
    return svg


@dataclass
class RunManifest:
    command: str
    config: dict[str, Any]
    config_hash: str
    started: float = field(default_factory=time.time)
    finished: float | None = None
    status: str = "running"
    exit_code: int | None = None
    replicas: list[dict] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    checks: list[dict] = field(default_factory=list)
    versions: dict[str, str] = field(default_factory=lambda: {
        "circsine": __version__, "python": platform.python_version(),
        "numpy": np.__version__, "scipy": scipy.__version__})

    def add_output(self, path: Path) -> None:
        self.outputs.append(str(path))

    def finish(self, exit_code: int) -> None:
        self.finished = time.time()
        self.exit_code = exit_code
        self.status = {0: "pass", 1: "usage", 2: "numerical-failure", 3: "acceptance-failure"}.get(exit_code, "error")

    def to_dict(self) -> dict[str, Any]:
        d = dict(self.__dict__)
        d["wall_clock"] = None if self.finished is None else self.finished - self.started
        d["output_sha256"] = {p: _sha256(p) for p in self.outputs if Path(p).exists()}
        return d

    def save(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True, default=str) + "\n")
        return path


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
