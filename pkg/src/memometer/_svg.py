"""Tiny dependency-free SVG emitters for line charts and histograms."""

from __future__ import annotations

import math

_W, _H = 640, 400
_ML, _MR, _MT, _MB = 60, 20, 30, 45
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _scale(vals, lo, hi, out_lo, out_hi):
    span = hi - lo if hi > lo else 1.0
    return [out_lo + (v - lo) / span * (out_hi - out_lo) for v in vals]


def _frame(title: str, xlabel: str, ylabel: str, xlo, xhi, ylo, yhi):
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="monospace" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="18" text-anchor="middle">{title}</text>',
        f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" stroke="black"/>',
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" stroke="black"/>',
        f'<text x="{_W / 2}" y="{_H - 8}" text-anchor="middle">{xlabel}</text>',
        f'<text x="14" y="{_H / 2}" text-anchor="middle" '
        f'transform="rotate(-90 14 {_H / 2})">{ylabel}</text>',
        f'<text x="{_ML}" y="{_H - _MB + 16}" text-anchor="middle">{xlo:.4g}</text>',
        f'<text x="{_W - _MR}" y="{_H - _MB + 16}" text-anchor="middle">{xhi:.4g}</text>',
        f'<text x="{_ML - 6}" y="{_H - _MB}" text-anchor="end">{ylo:.4g}</text>',
        f'<text x="{_ML - 6}" y="{_MT + 6}" text-anchor="end">{yhi:.4g}</text>',
    ]
    return parts


def line_chart(path, series: dict, title: str, xlabel: str, ylabel: str,
               log_y: bool = False) -> None:
    """Write a polyline chart; ``series`` maps labels to (xs, ys) pairs."""
    xs_all = [x for xs, _ in series.values() for x in xs]
    ys_all = [y for _, ys in series.values() for y in ys]
    if log_y:
        ys_all = [math.log10(max(y, 1e-300)) for y in ys_all]
    xlo, xhi = min(xs_all), max(xs_all)
    ylo, yhi = min(ys_all), max(ys_all)
    parts = _frame(title, xlabel, ylabel + (" (log10)" if log_y else ""),
                   xlo, xhi, ylo, yhi)
    for idx, (label, (xs, ys)) in enumerate(series.items()):
        if log_y:
            ys = [math.log10(max(y, 1e-300)) for y in ys]
        px = _scale(xs, xlo, xhi, _ML, _W - _MR)
        py = _scale(ys, ylo, yhi, _H - _MB, _MT)
        pts = " ".join(f"{x:.1f},{y:.1f}" for x, y in zip(px, py))
        color = _COLORS[idx % len(_COLORS)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{_W - _MR - 4}" y="{_MT + 14 * (idx + 1)}" '
                     f'text-anchor="end" fill="{color}">{label}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def histogram(path, edges, counts, title: str, xlabel: str) -> None:
    """Write a bar chart of pre-binned counts."""
    xlo, xhi = float(edges[0]), float(edges[-1])
    yhi = max(int(max(counts)), 1)
    parts = _frame(title, xlabel, "count", xlo, xhi, 0, yhi)
    for left, right, c in zip(edges[:-1], edges[1:], counts):
        x0 = _scale([left], xlo, xhi, _ML, _W - _MR)[0]
        x1 = _scale([right], xlo, xhi, _ML, _W - _MR)[0]
        y = _scale([c], 0, yhi, _H - _MB, _MT)[0]
        parts.append(
            f'<rect x="{x0:.1f}" y="{y:.1f}" width="{max(x1 - x0 - 1, 1):.1f}" '
            f'height="{_H - _MB - y:.1f}" fill="#1f77b4" stroke="none"/>'
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
