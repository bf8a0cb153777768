"""Tiny native SVG line plots with log-log axes."""

from __future__ import annotations

import math
from html import escape

_COLORS = ["#1f77b4", "#2ca02c", "#17becf", "#d62728", "#ff7f0e", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22"]


def _decades(lo: float, hi: float) -> list[int]:
    return list(range(math.floor(math.log10(lo)), math.ceil(math.log10(hi)) + 1))


def line_plot(series, path=None, *, title="", xlabel="time", ylabel="", width=720, height=480) -> str:
    """Render ``[(label, xs, ys), ...]`` as polylines on log-log axes.

    Non-positive or non-finite points are dropped.  Returns the SVG text and
    writes it to ``path`` when given.
    """
    clean = []
    for label, xs, ys in series:
        pts = [(float(x), float(y)) for x, y in zip(xs, ys)
               if x > 0 and y > 0 and math.isfinite(x) and math.isfinite(y)]
        clean.append((label, pts))
    allpts = [p for _, pts in clean for p in pts]
    if allpts:
        xlo, xhi = min(p[0] for p in allpts), max(p[0] for p in allpts)
        ylo, yhi = min(p[1] for p in allpts), max(p[1] for p in allpts)
    else:
        xlo, xhi, ylo, yhi = 1.0, 10.0, 1.0, 10.0
    if xhi <= xlo:
        xhi = xlo * 10
    if yhi <= ylo:
        yhi = ylo * 10
    lx0, lx1 = math.log10(xlo), math.log10(xhi)
    ly0, ly1 = math.log10(ylo), math.log10(yhi)
    ml, mr, mt, mb = 70, 190, 40, 50
    pw, ph = width - ml - mr, height - mt - mb

    def sx(x):
        return ml + (math.log10(x) - lx0) / (lx1 - lx0) * pw

    def sy(y):
        return mt + ph - (math.log10(y) - ly0) / (ly1 - ly0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for e in _decades(xlo, xhi):
        x = 10.0**e
        if xlo <= x <= xhi:
            px = sx(x)
            out.append(f'<line x1="{px:.1f}" y1="{mt}" x2="{px:.1f}" y2="{mt + ph}" stroke="#ddd"/>')
            out.append(f'<text x="{px:.1f}" y="{mt + ph + 15}" text-anchor="middle">1e{e}</text>')
    for e in _decades(ylo, yhi):
        y = 10.0**e
        if ylo <= y <= yhi:
            py = sy(y)
            out.append(f'<line x1="{ml}" y1="{py:.1f}" x2="{ml + pw}" y2="{py:.1f}" stroke="#ddd"/>')
            out.append(f'<text x="{ml - 5}" y="{py + 4:.1f}" text-anchor="end">1e{e}</text>')
    for i, (label, pts) in enumerate(clean):
        color = _COLORS[i % len(_COLORS)]
        if len(pts) > 1:
            coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        ly = mt + 14 * i + 10
        out.append(f'<line x1="{ml + pw + 10}" y1="{ly}" x2="{ml + pw + 30}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 35}" y="{ly + 4}">{escape(label)}</text>')
    out.append(f'<text x="{ml + pw / 2}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="15" y="{mt + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 15 {mt + ph / 2})">{escape(ylabel)}</text>')
    if title:
        out.append(f'<text x="{ml + pw / 2}" y="20" text-anchor="middle" font-size="13">'
                   f'{escape(title)}</text>')
    out.append("</svg>")
    svg = "\n".join(out) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(svg)
    return svg
