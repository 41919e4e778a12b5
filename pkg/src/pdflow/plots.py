"""Minimal static SVG line charts and the CSV series behind them."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

from pdflow.dynamics import write_csv

WIDTH, HEIGHT = 640, 400
MARGIN = (60, 20, 40, 70)  # top, right, bottom, left
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def _ticks(lo, hi, count=5):
    if hi <= lo:
        return [lo]
    return list(np.linspace(lo, hi, count))


def line_chart(x, series: dict, title="", xlabel="", ylabel=""):
    """SVG document plotting every ``label -> y`` in ``series`` against ``x``.
    Non-finite points break the polyline."""
    x = np.asarray(x, dtype=float)
    ys = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    finite = [v[np.isfinite(v)] for v in ys.values()]
    finite = [v for v in finite if v.size]
    ylo = min((float(v.min()) for v in finite), default=0.0)
    yhi = max((float(v.max()) for v in finite), default=1.0)
    if yhi - ylo < 1e-12:
        ylo, yhi = ylo - 0.5, yhi + 0.5
    xlo, xhi = float(np.nanmin(x)), float(np.nanmax(x))
    if xhi - xlo < 1e-12:
        xlo, xhi = xlo - 0.5, xhi + 0.5
    top, right, bottom, left = MARGIN
    pw, ph = WIDTH - left - right, HEIGHT - top - bottom

    def px(v):
        return left + (v - xlo) / (xhi - xlo) * pw

    def py(v):
        return top + (yhi - v) / (yhi - ylo) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for v in _ticks(xlo, xhi):
        out.append(f'<line x1="{px(v):.1f}" y1="{top + ph}" x2="{px(v):.1f}" y2="{top + ph + 4}" '
                   f'stroke="black"/>')
        out.append(f'<text x="{px(v):.1f}" y="{top + ph + 16}" text-anchor="middle">{v:.3g}</text>')
    for v in _ticks(ylo, yhi):
        out.append(f'<line x1="{left - 4}" y1="{py(v):.1f}" x2="{left}" y2="{py(v):.1f}" '
                   f'stroke="black"/>')
        out.append(f'<text x="{left - 6}" y="{py(v) + 4:.1f}" text-anchor="end">{v:.3g}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{HEIGHT - 6}" text-anchor="middle">'
               f'{escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{top + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {top + ph / 2:.1f})">{escape(ylabel)}</text>')
    for i, (label, y) in enumerate(ys.items()):
        color = COLORS[i % len(COLORS)]
        runs, cur = [], []
        for a, b in zip(x, y):
            if math.isfinite(a) and math.isfinite(b):
                cur.append(f"{px(a):.1f},{py(b):.1f}")
            elif cur:
                runs.append(cur)
                cur = []
        if cur:
            runs.append(cur)
        for run in runs:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                       f'points="{" ".join(run)}"/>')
        out.append(f'<text x="{left + 8}" y="{top + 14 + 14 * i}" fill="{color}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _log10(v):
    v = np.asarray(v, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(v > 0, np.log10(np.abs(v)), np.nan)


def write_loglog(path_stem, t, values, name):
    """``<stem>.csv`` with ``log10 t, log10 |value|`` and the matching ``<stem>.svg``."""
    lt, lv = _log10(t), _log10(np.abs(values))
    write_csv(path_stem + ".csv", ["log10_t", f"log10_{name}"], np.column_stack([lt, lv]))
    with open(path_stem + ".svg", "w") as fh:
        fh.write(line_chart(lt, {name: lv}, title=f"{name} (log-log)", xlabel="log10 t",
                            ylabel=f"log10 {name}"))


def write_energy(path_stem, t, e_eps):
    write_csv(path_stem + ".csv", ["t", "E_eps"], np.column_stack([t, e_eps]))
    with open(path_stem + ".svg", "w") as fh:
        fh.write(line_chart(t, {"E_eps": e_eps}, title="perturbed energy", xlabel="t",
                            ylabel="E_eps"))
