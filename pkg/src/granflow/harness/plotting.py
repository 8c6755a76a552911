"""Minimal deterministic SVG line charts (no plotting backend, byte-stable output)."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=70, right=160, top=30, bottom=50)
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"]


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * k / (n - 1) for k in range(n)]


def _num(v: float) -> str:
    return f"{v:.2f}"


def _label(v: float) -> str:
    return f"{v:.3g}"


def render_svg(series: Sequence[tuple[str, Sequence[float], Sequence[float]]], scale: str = "linear",
               title: str = "", xlabel: str = "t", ylabel: str = "") -> str:
    """Line chart of labeled ``(label, t, value)`` series as an SVG string.

    With ``scale="semilog_y"`` nonpositive values are dropped from each line.
    """
    if not series:
        raise ValueError("need at least one series")
    if scale not in ("linear", "semilog_y"):
        raise ValueError(f"unknown scale {scale!r}")
    lines = []
    for label, t, v in series:
        t = np.asarray(t, dtype=float)
        v = np.asarray(v, dtype=float)
        if t.shape != v.shape:
            raise ValueError(f"series {label!r}: t and values differ in length")
        keep = np.isfinite(t) & np.isfinite(v)
        if scale == "semilog_y":
            keep &= v > 0
            v = np.where(keep, np.log10(np.where(keep, v, 1.0)), 0.0)
        lines.append((label, t[keep], v[keep]))
    pts = [(t, v) for _, t, v in lines if t.size]
    if not pts:
        raise ValueError("no plottable points")
    xlo = min(float(t.min()) for t, _ in pts)
    xhi = max(float(t.max()) for t, _ in pts)
    ylo = min(float(v.min()) for _, v in pts)
    yhi = max(float(v.max()) for _, v in pts)
    if xhi == xlo:
        xhi = xlo + 1.0
    if yhi == ylo:
        ylo, yhi = ylo - 0.5, yhi + 0.5

    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(x):
        return MARGIN["left"] + (x - xlo) / (xhi - xlo) * pw

    def sy(y):
        return MARGIN["top"] + (1.0 - (y - ylo) / (yhi - ylo)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" '
        'fill="none" stroke="black" stroke-width="1"/>',
    ]
    if title:
        out.append(f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>')
    for x in _ticks(xlo, xhi):
        out.append(f'<text x="{_num(sx(x))}" y="{HEIGHT - MARGIN["bottom"] + 16}" text-anchor="middle" '
                   f'font-size="11">{_label(x)}</text>')
    for y in _ticks(ylo, yhi):
        text = _label(10 ** y) if scale == "semilog_y" else _label(y)
        out.append(f'<text x="{MARGIN["left"] - 6}" y="{_num(sy(y) + 4)}" text-anchor="end" '
                   f'font-size="11">{text}</text>')
    out.append(f'<text x="{MARGIN["left"] + pw / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle" '
               f'font-size="12">{escape(xlabel)}</text>')
    if ylabel:
        cy = MARGIN["top"] + ph / 2
        out.append(f'<text x="16" y="{cy:.1f}" text-anchor="middle" font-size="12" '
                   f'transform="rotate(-90 16 {cy:.1f})">{escape(ylabel)}</text>')
    for k, (label, t, v) in enumerate(lines):
        color = PALETTE[k % len(PALETTE)]
        if t.size:
            coords = " ".join(f"{_num(sx(a))},{_num(sy(b))}" for a, b in zip(t, v))
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        ly = MARGIN["top"] + 14 + 16 * k
        lx = WIDTH - MARGIN["right"] + 10
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 22}" y="{ly}" font-size="11">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(series, scale: str, path, **kw) -> Path:
    """Write the chart to ``path``; raises ``OSError`` if the path is unwritable."""
    svg = render_svg(series, scale, **kw)
    p = Path(path)
    p.write_text(svg)
    return p

