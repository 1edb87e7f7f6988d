"""Minimal self-contained SVG line charts (no external renderer)."""

from __future__ import annotations

import math
from typing import Optional, Sequence

__all__ = ["line_chart"]

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
_W, _H, _PAD = 640, 400, 54


def _ticks(lo: float, hi: float, n: int = 5):
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    raw = span / max(1, n - 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = min(s * mag for s in (1, 2, 5, 10) if s * mag >= raw)
    start = math.ceil(lo / step) * step
    out = []
    t = start
    while t <= hi + 1e-12 * span:
        out.append(t)
        t += step
    return out


def line_chart(path, series: Sequence[tuple], title: str = "",
               xlabel: str = "", ylabel: str = "",
               log_y: bool = False,
               hline: Optional[float] = None,
               hline_label: str = "") -> None:
    """Write a polyline chart: series is a list of (label, xs, ys)."""
    pts = []
    for _, xs, ys in series:
        for x, y in zip(xs, ys):
            y = math.log10(y) if log_y and y > 0 else (None if log_y else y)
            if y is not None and math.isfinite(float(x)) and math.isfinite(y):
                pts.append((float(x), float(y)))
    if hline is not None:
        hv = math.log10(hline) if log_y and hline > 0 else hline
        if hv is not None and math.isfinite(hv):
            pts.append((0.0, hv))
    if not pts:
        pts = [(0.0, 0.0), (1.0, 1.0)]
    x_lo, x_hi = min(p[0] for p in pts), max(p[0] for p in pts)
    y_lo, y_hi = min(p[1] for p in pts), max(p[1] for p in pts)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    def sx(x):
        return _PAD + (x - x_lo) / (x_hi - x_lo) * (_W - 2 * _PAD)

    def sy(y):
        return _H - _PAD - (y - y_lo) / (y_hi - y_lo) * (_H - 2 * _PAD)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="monospace" font-size="11">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="18" text-anchor="middle" font-size="13">'
        f'{title}</text>',
    ]
    for t in _ticks(x_lo, x_hi):
        parts.append(f'<line x1="{sx(t):.1f}" y1="{_H - _PAD}" x2="{sx(t):.1f}" '
                     f'y2="{_H - _PAD + 4}" stroke="black"/>')
        parts.append(f'<text x="{sx(t):.1f}" y="{_H - _PAD + 16}" '
                     f'text-anchor="middle">{t:g}</text>')
    for t in _ticks(y_lo, y_hi):
        label = f"1e{t:g}" if log_y else f"{t:g}"
        parts.append(f'<line x1="{_PAD - 4}" y1="{sy(t):.1f}" x2="{_PAD}" '
                     f'y2="{sy(t):.1f}" stroke="black"/>')
        parts.append(f'<text x="{_PAD - 6}" y="{sy(t):.1f}" '
                     f'text-anchor="end" dominant-baseline="middle">{label}</text>')
    parts.append(f'<rect x="{_PAD}" y="{_PAD}" width="{_W - 2 * _PAD}" '
                 f'height="{_H - 2 * _PAD}" fill="none" stroke="black"/>')
    parts.append(f'<text x="{_W / 2}" y="{_H - 8}" text-anchor="middle">'
                 f'{xlabel}</text>')
    parts.append(f'<text x="14" y="{_H / 2}" text-anchor="middle" '
                 f'transform="rotate(-90 14 {_H / 2})">{ylabel}</text>')
    if hline is not None:
        hv = math.log10(hline) if log_y and hline > 0 else hline
        if hv is not None and math.isfinite(hv) and y_lo <= hv <= y_hi:
            parts.append(
                f'<line x1="{_PAD}" y1="{sy(hv):.1f}" x2="{_W - _PAD}" '
                f'y2="{sy(hv):.1f}" stroke="#2ca02c" stroke-dasharray="6,4"/>')
            if hline_label:
                parts.append(f'<text x="{_W - _PAD - 4}" y="{sy(hv) - 4:.1f}" '
                             f'text-anchor="end" fill="#2ca02c">{hline_label}</text>')
    for idx, (label, xs, ys) in enumerate(series):
        color = _COLORS[idx % len(_COLORS)]
        coords = []
        for x, y in zip(xs, ys):
            yy = math.log10(y) if log_y and y > 0 else (None if log_y else y)
            if yy is None or not math.isfinite(yy):
                continue
            coords.append(f"{sx(float(x)):.1f},{sy(yy):.1f}")
        if coords:
            parts.append(f'<polyline points="{" ".join(coords)}" fill="none" '
                         f'stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{_PAD + 8}" y="{_PAD + 14 * (idx + 1)}" '
                     f'fill="{color}">{label}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))
