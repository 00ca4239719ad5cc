"""Dependency-free SVG charts with byte-stable output.

Numbers are printed with fixed precision and nothing time-dependent is
embedded, so identical input gives identical bytes.
"""

from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
           "#bcbd22", "#17becf"]
W, H, PAD = 640, 400, 56


def _f(v: float) -> str:
    return f"{v:.2f}"


def _check(values) -> np.ndarray:
    a = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError("SVG data must be finite")
    return a


def _doc(body: list[str], width=W, height=H, title="") -> str:
    head = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
            f'<rect width="{width}" height="{height}" fill="white"/>']
    if title:
        head.append(f'<text x="{width / 2:.0f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>')
    return "\n".join(head + body + ["</svg>"]) + "\n"


def line_chart(series: dict, x=None, title: str = "", xlabel: str = "", ylabel: str = "") -> str:
    """One polyline per named series; all series share ``x``."""
    ys = {k: _check(v) for k, v in series.items()}
    n = max((len(v) for v in ys.values()), default=0)
    xs = _check(np.arange(n) if x is None else x)
    allv = np.concatenate([v for v in ys.values()]) if ys else np.zeros(1)
    lo, hi = float(allv.min()), float(allv.max())
    if hi == lo:
        lo, hi = lo - 1.0, hi + 1.0
    x0, x1 = (float(xs.min()), float(xs.max())) if n else (0.0, 1.0)
    if x1 == x0:
        x0, x1 = x0 - 1.0, x1 + 1.0

    def px(v):
        return PAD + (v - x0) / (x1 - x0) * (W - 2 * PAD)

    def py(v):
        return H - PAD - (v - lo) / (hi - lo) * (H - 2 * PAD)

    body = [f'<line x1="{PAD}" y1="{H - PAD}" x2="{W - PAD}" y2="{H - PAD}" stroke="black"/>',
            f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{H - PAD}" stroke="black"/>',
            f'<text x="{PAD - 4}" y="{_f(py(hi))}" text-anchor="end">{hi:.4g}</text>',
            f'<text x="{PAD - 4}" y="{_f(py(lo))}" text-anchor="end">{lo:.4g}</text>',
            f'<text x="{_f(px(x0))}" y="{H - PAD + 14}" text-anchor="middle">{x0:.4g}</text>',
            f'<text x="{_f(px(x1))}" y="{H - PAD + 14}" text-anchor="middle">{x1:.4g}</text>']
    if xlabel:
        body.append(f'<text x="{W / 2:.0f}" y="{H - 16}" text-anchor="middle">{escape(xlabel)}</text>')
    if ylabel:
        body.append(f'<text x="14" y="{H / 2:.0f}" transform="rotate(-90 14 {H / 2:.0f})" '
                    f'text-anchor="middle">{escape(ylabel)}</text>')
    for i, (name, v) in enumerate(ys.items()):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{_f(px(a))},{_f(py(b))}" for a, b in zip(xs, v))
        body.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        body.append(f'<text x="{W - PAD + 4}" y="{PAD + 14 * i}" fill="{color}">{escape(str(name))}</text>')
    return _doc(body, W + 90, H, title)


def radar_chart(labels, values, title: str = "") -> str:
    """Polygon over equally spaced axes; ``values`` are clipped to ``[0, 1]``."""
    v = np.clip(_check(values), 0.0, 1.0)
    k = len(labels)
    if k < 3 or len(v) != k:
        raise ValueError("radar needs at least 3 axes and one value per axis")
    cx, cy, r = 200, 210, 140

    def point(i, rad):
        a = -math.pi / 2 + 2 * math.pi * i / k
        return cx + rad * math.cos(a), cy + rad * math.sin(a)

    body = []
    for ring in (0.25, 0.5, 0.75, 1.0):
        pts = " ".join(f"{_f(x)},{_f(y)}" for x, y in (point(i, r * ring) for i in range(k)))
        body.append(f'<polygon points="{pts}" fill="none" stroke="#cccccc"/>')
    for i, lab in enumerate(labels):
        x, y = point(i, r)
        lx, ly = point(i, r + 18)
        body.append(f'<line x1="{cx}" y1="{cy}" x2="{_f(x)}" y2="{_f(y)}" stroke="#999999"/>')
        body.append(f'<text x="{_f(lx)}" y="{_f(ly)}" text-anchor="middle">{escape(str(lab))}</text>')
    pts = " ".join(f"{_f(x)},{_f(y)}" for x, y in (point(i, r * v[i]) for i in range(k)))
    body.append(f'<polygon points="{pts}" fill="#1f77b4" fill-opacity="0.35" stroke="#1f77b4" stroke-width="2"/>')
    return _doc(body, 400, 400, title)


def _ramp(t: float) -> str:
    # white -> dark blue
    r = int(round(255 - t * (255 - 8)))
    g = int(round(255 - t * (255 - 48)))
    b = int(round(255 - t * (255 - 107)))
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap(matrix, row_labels=None, col_labels=None, title: str = "") -> str:
    """Colour scale spans this matrix's own minimum to maximum."""
    m = _check(matrix)
    if m.ndim != 2:
        raise ValueError("heatmap needs a 2-D matrix")
    h, w = m.shape
    lo, hi = float(m.min()), float(m.max())
    cell = max(12, min(48, 480 // max(h, w)))
    left, top = 150, 40
    body = []
    for i in range(h):
        for j in range(w):
            t = 0.5 if hi == lo else (m[i, j] - lo) / (hi - lo)
            body.append(f'<rect x="{left + j * cell}" y="{top + i * cell}" width="{cell}" height="{cell}" '
                        f'fill="{_ramp(t)}"><title>{m[i, j]:.6g}</title></rect>')
    for i, lab in enumerate(row_labels or []):
        body.append(f'<text x="{left - 4}" y="{top + i * cell + cell / 2 + 4:.1f}" text-anchor="end">{escape(str(lab))}</text>')
    for j, lab in enumerate(col_labels or []):
        x = left + j * cell + cell / 2
        y = top + h * cell + 8
        body.append(f'<text x="{x:.1f}" y="{y}" transform="rotate(45 {x:.1f} {y})">{escape(str(lab))}</text>')
    body.append(f'<text x="{left}" y="{top - 6}">min {lo:.4g}  max {hi:.4g}</text>')
    return _doc(body, left + w * cell + 40, top + h * cell + 150, title)


def emit_svg(kind: str, data: dict, path) -> Path:
    """Render ``data`` (keyword arguments of the chart function) and write it to ``path``."""
    fns = {"line": line_chart, "radar": radar_chart, "heatmap": heatmap}
    if kind not in fns:
        raise ValueError(f"unknown chart kind {kind!r}")
    path = Path(path)
    path.write_text(fns[kind](**data))
    return path
