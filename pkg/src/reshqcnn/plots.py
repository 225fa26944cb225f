"""Minimal static SVG line charts (one polyline per curve)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#000000", "#9467bd", "#ff7f0e")

_W, _H = 640, 420
_L, _R, _T, _B = 70, 20, 30, 60


def line_chart_svg(
    curves: Sequence[tuple],
    xlabel: str = "training rounds",
    ylabel: str = "cost",
    title: str = "",
    ylim: tuple = (0.0, 1.0),
) -> str:
    """``curves`` is a sequence of ``(label, xs, ys)``."""
    xs_all = [x for _, xs, _ in curves for x in xs]
    x0, x1 = (min(xs_all), max(xs_all)) if xs_all else (0, 1)
    if x1 == x0:
        x1 = x0 + 1
    y0, y1 = ylim
    pw, ph = _W - _L - _R, _H - _T - _B

    def sx(x):
        return _L + (x - x0) / (x1 - x0) * pw

    def sy(y):
        y = min(max(y, y0), y1)
        return _T + ph - (y - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f'<rect x="{_L}" y="{_T}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
    ]
    for i in range(6):
        yv = y0 + (y1 - y0) * i / 5
        out.append(f'<text x="{_L - 8}" y="{sy(yv) + 4:.1f}" text-anchor="end">{yv:.1f}</text>')
        xv = x0 + (x1 - x0) * i / 5
        out.append(f'<text x="{sx(xv):.1f}" y="{_T + ph + 18}" text-anchor="middle">{xv:g}</text>')
    out.append(
        f'<text x="{_L + pw / 2}" y="{_H - 15}" text-anchor="middle">{escape(xlabel)}</text>'
    )
    out.append(
        f'<text x="18" y="{_T + ph / 2}" text-anchor="middle" '
        f'transform="rotate(-90 18 {_T + ph / 2})">{escape(ylabel)}</text>'
    )
    if title:
        out.append(f'<text x="{_L + pw / 2}" y="18" text-anchor="middle">{escape(title)}</text>')
    for k, (label, xs, ys) in enumerate(curves):
        color = COLORS[k % len(COLORS)]
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = _T + 16 + 16 * k
        out.append(
            f'<line x1="{_L + pw - 150}" y1="{ly - 4}" x2="{_L + pw - 130}" y2="{ly - 4}" stroke="{color}"/>'
        )
        out.append(f'<text x="{_L + pw - 125}" y="{ly}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_line_chart(path, curves, **kwargs) -> Path:
    path = Path(path)
    path.write_text(line_chart_svg(curves, **kwargs))
    return path
