"""Tiny dependency-free SVG line charts for run diagnostics."""

from __future__ import annotations

import math

_W, _H = 640, 400
_ML, _MR, _MT, _MB = 70, 20, 20, 50


def _ticks(lo: float, hi: float, n: int = 5):
    if hi <= lo:
        hi = lo + 1.0
    step = (hi - lo) / n
    return [lo + k * step for k in range(n + 1)]


def gap_chart(xs: list, ys: list, xlabel: str, ylabel: str) -> str:
    """Polyline of ys (log10 scale, floored at 1e-16) against xs."""
    pts = [(float(x), math.log10(max(float(y), 1e-16))) for x, y in zip(xs, ys)]
    if not pts:
        pts = [(0.0, 0.0)]
    x_lo, x_hi = min(p[0] for p in pts), max(p[0] for p in pts)
    y_lo, y_hi = min(p[1] for p in pts), max(p[1] for p in pts)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pw, ph = _W - _ML - _MR, _H - _MT - _MB

    def px(x):
        return _ML + (x - x_lo) / (x_hi - x_lo) * pw

    def py(y):
        return _MT + (y_hi - y) / (y_hi - y_lo) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<rect x="{_ML}" y="{_MT}" width="{pw}" height="{ph}" fill="none" '
        f'stroke="#444"/>',
    ]
    for tx in _ticks(x_lo, x_hi):
        parts.append(f'<line x1="{px(tx):.1f}" y1="{_MT + ph}" x2="{px(tx):.1f}" '
                     f'y2="{_MT + ph + 5}" stroke="#444"/>')
        parts.append(f'<text x="{px(tx):.1f}" y="{_MT + ph + 20}" font-size="11" '
                     f'text-anchor="middle">{tx:.3g}</text>')
    for ty in _ticks(y_lo, y_hi):
        parts.append(f'<line x1="{_ML - 5}" y1="{py(ty):.1f}" x2="{_ML}" '
                     f'y2="{py(ty):.1f}" stroke="#444"/>')
        parts.append(f'<text x="{_ML - 8}" y="{py(ty):.1f}" font-size="11" '
                     f'text-anchor="end" dominant-baseline="middle">1e{ty:.1f}</text>')
    poly = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in pts)
    parts.append(f'<polyline points="{poly}" fill="none" stroke="#1f6fb2" '
                 f'stroke-width="1.5"/>')
    parts.append(f'<text x="{_ML + pw / 2:.0f}" y="{_H - 12}" font-size="12" '
                 f'text-anchor="middle">{xlabel}</text>')
    parts.append(f'<text x="16" y="{_MT + ph / 2:.0f}" font-size="12" '
                 f'text-anchor="middle" transform="rotate(-90 16 {_MT + ph / 2:.0f})">'
                 f'{ylabel}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
