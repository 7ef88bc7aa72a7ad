"""Minimal deterministic SVG output: fringe plots and correlation heatmaps."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

from .noise_model import CorrelationMatrix

_HEAD = '<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif">\n'


def _f(x: float) -> str:
    return f"{x:.2f}"


def _diverging(r: float) -> str:
    """Blue (-1) through white (0) to red (+1)."""
    r = max(-1.0, min(1.0, r))
    if r >= 0:
        g = round(255 * (1 - r))
        return f"#ff{g:02x}{g:02x}"
    g = round(255 * (1 + r))
    return f"#{g:02x}{g:02x}ff"


def heatmap_svg(corr: CorrelationMatrix, labels=None, title: str = "noise correlation") -> str:
    """Upper-triangle heatmap; indeterminate cells are grey with a slash hatch
    (``class="hatched"``), determinate ones carry ``class="cell"``."""
    n = corr.n
    labels = list(labels) if labels else [f"Q{i + 1}" for i in range(n)]
    cell, margin = 56, 48
    w = h = margin + n * cell + 12
    parts = [
        _HEAD.format(w=w, h=h + 20),
        "<defs><pattern id=\"hatch\" patternUnits=\"userSpaceOnUse\" width=\"8\" height=\"8\">"
        "<rect width=\"8\" height=\"8\" fill=\"#d0d0d0\"/>"
        "<path d=\"M0,8 L8,0\" stroke=\"#707070\" stroke-width=\"1.5\"/></pattern></defs>\n",
        f'<text x="{w / 2:.1f}" y="16" text-anchor="middle" font-size="13">{escape(title)}</text>\n',
    ]
    top = margin + 4
    for k, lab in enumerate(labels):
        c = margin + k * cell + cell / 2
        parts.append(f'<text x="{c:.1f}" y="{top - 8}" text-anchor="middle" font-size="11">{escape(lab)}</text>\n')
        parts.append(
            f'<text x="{margin - 6}" y="{top + k * cell + cell / 2 + 4:.1f}" text-anchor="end" font-size="11">{escape(lab)}</text>\n'
        )
    for i in range(n):
        for j in range(n):
            x, y = margin + j * cell, top + i * cell
            if j < i:
                continue
            if i == j:
                parts.append(f'<rect class="diag" x="{x}" y="{y}" width="{cell}" height="{cell}" fill="#ffffff" stroke="#999999"/>\n')
                continue
            r = corr.entries[i, j]
            if not corr.determinate[i, j] or not math.isfinite(r):
                parts.append(
                    f'<rect class="hatched" data-pair="{i + 1},{j + 1}" x="{x}" y="{y}" width="{cell}" height="{cell}" fill="url(#hatch)" stroke="#999999"/>\n'
                )
                continue
            parts.append(
                f'<rect class="cell" data-pair="{i + 1},{j + 1}" x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{_diverging(r)}" stroke="#999999"/>\n'
            )
            parts.append(
                f'<text x="{x + cell / 2:.1f}" y="{y + cell / 2 + 4:.1f}" text-anchor="middle" font-size="11">{r:.2f}</text>\n'
            )
    parts.append("</svg>\n")
    return "".join(parts)


def fringe_svg(times, populations, model=None, title: str = "", width: int = 480, height: int = 300) -> str:
    """Scatter of the measured populations, optionally with a model curve."""
    t = np.asarray(times, dtype=float)
    p = np.asarray(populations, dtype=float)
    ml, mr, mt, mb = 48, 12, 28, 36
    tmax = float(t.max()) if t.size and t.max() > 0 else 1.0
    sx = lambda v: ml + (width - ml - mr) * v / tmax
    sy = lambda v: mt + (height - mt - mb) * (1.0 - v)
    parts = [
        _HEAD.format(w=width, h=height),
        f'<text x="{width / 2:.1f}" y="16" text-anchor="middle" font-size="13">{escape(title)}</text>\n',
        f'<rect x="{ml}" y="{mt}" width="{width - ml - mr}" height="{height - mt - mb}" fill="none" stroke="#333333"/>\n',
        f'<text x="{width / 2:.1f}" y="{height - 8}" text-anchor="middle" font-size="11">t (us)</text>\n',
        f'<text x="12" y="{height / 2:.1f}" font-size="11" transform="rotate(-90 12 {height / 2:.1f})" text-anchor="middle">P1</text>\n',
    ]
    for v in (0.0, 0.5, 1.0):
        parts.append(f'<text x="{ml - 4}" y="{_f(sy(v) + 4)}" text-anchor="end" font-size="10">{v:.1f}</text>\n')
    for v in np.linspace(0, tmax, 5):
        parts.append(f'<text x="{_f(sx(v))}" y="{height - mb + 14}" text-anchor="middle" font-size="10">{v:.2g}</text>\n')
    if model is not None:
        m = np.asarray(model, dtype=float)
        pts = " ".join(f"{_f(sx(a))},{_f(sy(b))}" for a, b in zip(t, m))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>\n')
    for a, b in zip(t, p):
        parts.append(f'<circle cx="{_f(sx(a))}" cy="{_f(sy(b))}" r="2" fill="#d62728"/>\n')
    parts.append("</svg>\n")
    return "".join(parts)
