"""Minimal self-contained SVG line charts."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 360
MARGIN = (50, 20, 40, 60)  # top, right, bottom, left


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def line_chart(
    series: dict[str, Sequence[float]],
    title: str = "",
    x_label: str = "",
    y_label: str = "",
) -> str:
    """Render named y-series sharing an integer x axis (0..n-1)."""
    top, right, bottom, left = MARGIN
    pw, ph = WIDTH - left - right, HEIGHT - top - bottom
    values = [v for ys in series.values() for v in ys]
    lo, hi = (min(values), max(values)) if values else (0.0, 1.0)
    if hi == lo:
        lo, hi = lo - 1.0, hi + 1.0
    n = max((len(ys) for ys in series.values()), default=1)
    colours = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")

    def x(i: int) -> float:
        return left + (pw * i / (n - 1) if n > 1 else pw / 2)

    def y(v: float) -> float:
        return top + ph * (hi - v) / (hi - lo)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{escape(title)}</text>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
        f'<text x="{left - 6}" y="{_fmt(y(hi))}" text-anchor="end" font-family="sans-serif" font-size="11">{hi:.4g}</text>',
        f'<text x="{left - 6}" y="{_fmt(y(lo))}" text-anchor="end" font-family="sans-serif" font-size="11">{lo:.4g}</text>',
        f'<text x="{left}" y="{top + ph + 16}" font-family="sans-serif" font-size="11">0</text>',
        f'<text x="{left + pw}" y="{top + ph + 16}" text-anchor="end" font-family="sans-serif" font-size="11">{n - 1}</text>',
        f'<text x="{left + pw / 2}" y="{HEIGHT - 8}" text-anchor="middle" font-family="sans-serif" font-size="12">{escape(x_label)}</text>',
        f'<text x="14" y="{top + ph / 2}" text-anchor="middle" font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 14 {top + ph / 2})">{escape(y_label)}</text>',
    ]
    for k, (name, ys) in enumerate(series.items()):
        colour = colours[k % len(colours)]
        pts = " ".join(f"{_fmt(x(i))},{_fmt(y(v))}" for i, v in enumerate(ys))
        out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{pts}"/>')
        out.append(
            f'<text x="{left + 8}" y="{top + 14 + 14 * k}" fill="{colour}" font-family="sans-serif" '
            f'font-size="11">{escape(name)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_line_chart(path: str | Path, series: dict[str, Sequence[float]], **labels: str) -> None:
    Path(path).write_text(line_chart(series, **labels), encoding="utf-8")
