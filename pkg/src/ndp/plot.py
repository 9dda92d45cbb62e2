"""Minimal deterministic SVG rendering for trajectories and training curves.

Output depends only on the input numbers: coordinates are printed with a
fixed number of decimals and elements appear in input order.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")
MARGIN = 40


@dataclass(frozen=True)
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _bounds(series: list[Series], equal: bool):
    xs = np.concatenate([s.x for s in series if len(s.x)] or [np.zeros(0)])
    ys = np.concatenate([s.y for s in series if len(s.y)] or [np.zeros(0)])
    xs, ys = xs[np.isfinite(xs)], ys[np.isfinite(ys)]
    if not len(xs):
        return (0.0, 1.0), (0.0, 1.0)
    lo_x, hi_x, lo_y, hi_y = xs.min(), xs.max(), ys.min(), ys.max()
    if hi_x - lo_x < 1e-12:
        lo_x, hi_x = lo_x - 0.5, hi_x + 0.5
    if hi_y - lo_y < 1e-12:
        lo_y, hi_y = lo_y - 0.5, hi_y + 0.5
    if equal:
        half = max(hi_x - lo_x, hi_y - lo_y) / 2
        cx, cy = (lo_x + hi_x) / 2, (lo_y + hi_y) / 2
        lo_x, hi_x, lo_y, hi_y = cx - half, cx + half, cy - half, cy + half
    return (float(lo_x), float(hi_x)), (float(lo_y), float(hi_y))


def render(series: list[Series], title: str = "", xlabel: str = "", ylabel: str = "",
           width: int = 480, height: int = 360, equal_aspect: bool = False) -> str:
    """SVG document with one polyline per series, axes, tick labels and a legend."""
    (x0, x1), (y0, y1) = _bounds(series, equal_aspect)
    pw, ph = width - 2 * MARGIN, height - 2 * MARGIN

    def px(x):
        return MARGIN + (x - x0) / (x1 - x0) * pw

    def py(y):
        return height - MARGIN - (y - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for frac in (0.0, 0.5, 1.0):
        xv, yv = x0 + frac * (x1 - x0), y0 + frac * (y1 - y0)
        out.append(f'<text x="{_fmt(px(xv))}" y="{height - MARGIN + 14}" font-size="10" '
                   f'text-anchor="middle">{xv:.3g}</text>')
        out.append(f'<text x="{MARGIN - 4}" y="{_fmt(py(yv) + 3)}" font-size="10" '
                   f'text-anchor="end">{yv:.3g}</text>')
    if title:
        out.append(f'<text x="{width / 2:.2f}" y="{MARGIN - 14}" font-size="13" '
                   f'text-anchor="middle">{escape(title)}</text>')
    if xlabel:
        out.append(f'<text x="{width / 2:.2f}" y="{height - 8}" font-size="11" '
                   f'text-anchor="middle">{escape(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="12" y="{height / 2:.2f}" font-size="11" text-anchor="middle" '
                   f'transform="rotate(-90 12 {height / 2:.2f})">{escape(ylabel)}</text>')
    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        keep = np.isfinite(s.x) & np.isfinite(s.y)
        pts = " ".join(f"{_fmt(px(a))},{_fmt(py(b))}" for a, b in zip(s.x[keep], s.y[keep]))
        if pts:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = MARGIN + 14 + 14 * i
        out.append(f'<line x1="{width - MARGIN - 90}" y1="{ly - 4}" x2="{width - MARGIN - 74}" '
                   f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{width - MARGIN - 70}" y="{ly}" font-size="10">{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def read_trace_csv(path) -> dict[str, np.ndarray]:
    """Columns of a CSV written by the env tracer or the trajectory exporter."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        return {h: np.zeros(0) for h in header if h}
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}


def read_metrics(path, metric: str) -> tuple[np.ndarray, np.ndarray]:
    """``(env_steps, value)`` for one metric from a metrics.jsonl file."""
    xs, ys = [], []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        if rec.get("metric_name") == metric:
            xs.append(rec["env_steps"])
            ys.append(rec["value"])
    return np.array(xs, dtype=float), np.array(ys, dtype=float)


def plot_file(path, width: int = 480, height: int = 360) -> str:
    """Render a trajectory CSV (x/y or agent_x/agent_y columns) or a metrics.jsonl."""
    path = Path(path)
    if path.suffix == ".jsonl":
        x, y = read_metrics(path, "success_rate")
        return render([Series(path.parent.name or path.stem, x, y)], "success rate", "env steps",
                      "success", width, height)
    cols = read_trace_csv(path)
    series = []
    for prefix, label in (("", path.stem), ("agent_", "agent"), ("object_", "object")):
        if f"{prefix}x" in cols:
            series.append(Series(label, cols[f"{prefix}x"], cols[f"{prefix}y"]))
    return render(series, path.stem, "x", "y", width, height, equal_aspect=True)
