"""Log-log heatmap of a results CSV as a standalone SVG 1.1 document."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np
from matplotlib import colormaps
from matplotlib.colors import to_hex

from .core import ForgetSplit, ProblemSpec
from .harness import read_results_csv
from .theory import efficient_threshold, inefficient_boundary, trivial_boundary

PLOT_W, PLOT_H = 480, 400
MARGIN_L, MARGIN_T, MARGIN_R, MARGIN_B = 80, 30, 110, 60


def _fmt_tick(x: float) -> str:
    exp = math.log10(x)
    if abs(exp - round(exp)) < 1e-9:
        return f"1e{int(round(exp))}"
    return f"{x:.3g}"


def _edges(values: np.ndarray) -> np.ndarray:
    """Cell boundaries in log10 space around sorted grid points."""
    lv = np.log10(values)
    if lv.size == 1:
        return np.array([lv[0] - 0.5, lv[0] + 0.5])
    mid = (lv[1:] + lv[:-1]) / 2
    return np.concatenate([[2 * lv[0] - mid[0]], mid, [2 * lv[-1] - mid[-1]]])


def _colour_value(v: float, vmax: float) -> float:
    if not math.isfinite(v):
        return 1.0
    return min(v, vmax) / vmax if vmax > 0 else 0.0


def render_svg(rows, column: str = "ratio", overlay_theory: bool = False, cmap: str = "viridis",
               vmax: float | None = None) -> str:
    if column not in rows[0]:
        raise KeyError(column)
    es = np.array(sorted({r["e"] for r in rows}))
    ks = np.array(sorted({r["kdp"] for r in rows}))
    vals = np.array([float(r[column]) for r in rows])
    finite = vals[np.isfinite(vals)]
    if vmax is None:
        vmax = 1.0 if column == "ratio" else (float(finite.max()) if finite.size else 1.0)
    cm = colormaps[cmap]

    xe, ye = _edges(ks), _edges(es)

    def px(lx):
        return MARGIN_L + (lx - xe[0]) / (xe[-1] - xe[0]) * PLOT_W

    def py(ly):
        return MARGIN_T + PLOT_H - (ly - ye[0]) / (ye[-1] - ye[0]) * PLOT_H

    W = MARGIN_L + PLOT_W + MARGIN_R
    H = MARGIN_T + PLOT_H + MARGIN_B
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">',
        "<defs>",
        '<pattern id="hatch" patternUnits="userSpaceOnUse" width="6" height="6" patternTransform="rotate(45)">',
        '<line x1="0" y1="0" x2="0" y2="6" stroke="#000" stroke-width="1" stroke-opacity="0.5"/>',
        "</pattern>",
        "</defs>",
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="#fff"/>',
    ]

    ie = {e: i for i, e in enumerate(es)}
    ik = {k: i for i, k in enumerate(ks)}
    for r in rows:
        i, j = ie[r["e"]], ik[r["kdp"]]
        x0, x1 = px(xe[j]), px(xe[j + 1])
        y0, y1 = py(ye[i + 1]), py(ye[i])
        v = float(r[column])
        colour = to_hex(cm(_colour_value(v, vmax)))
        title = escape(f"e={r['e']:.4g} kdp={r['kdp']:.4g} {column}={v:.4g}")
        out.append(
            f'<rect class="cell" x="{x0:.3f}" y="{y0:.3f}" width="{x1 - x0:.3f}" height="{y1 - y0:.3f}" '
            f'fill="{colour}"><title>{title}</title></rect>'
        )
        if r.get("censored_scratch", 0) or r.get("censored_unlearn", 0):
            out.append(
                f'<rect class="censored" x="{x0:.3f}" y="{y0:.3f}" width="{x1 - x0:.3f}" '
                f'height="{y1 - y0:.3f}" fill="url(#hatch)"/>'
            )

    # axes
    out.append(
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{PLOT_W}" height="{PLOT_H}" fill="none" stroke="#000"/>'
    )
    for k in ks:
        x = px(math.log10(k))
        out.append(f'<line x1="{x:.3f}" y1="{MARGIN_T + PLOT_H}" x2="{x:.3f}" y2="{MARGIN_T + PLOT_H + 4}" stroke="#000"/>')
        out.append(f'<text x="{x:.3f}" y="{MARGIN_T + PLOT_H + 16}" text-anchor="middle">{_fmt_tick(k)}</text>')
    for e in es:
        y = py(math.log10(e))
        out.append(f'<line x1="{MARGIN_L - 4}" y1="{y:.3f}" x2="{MARGIN_L}" y2="{y:.3f}" stroke="#000"/>')
        out.append(f'<text x="{MARGIN_L - 6}" y="{y + 4:.3f}" text-anchor="end">{_fmt_tick(e)}</text>')
    out.append(f'<text x="{MARGIN_L + PLOT_W / 2}" y="{H - 15}" text-anchor="middle">kdp (log scale)</text>')
    out.append(
        f'<text x="18" y="{MARGIN_T + PLOT_H / 2}" text-anchor="middle" '
        f'transform="rotate(-90 18 {MARGIN_T + PLOT_H / 2})">target excess e (log scale)</text>'
    )

    if overlay_theory:
        out.extend(_theory_paths(rows[0], ks, px, py, ye))

    # colour bar
    bx, bw = MARGIN_L + PLOT_W + 30, 16
    n = 64
    for s in range(n):
        frac = s / (n - 1)
        y = MARGIN_T + PLOT_H * (1 - (s + 1) / n)
        out.append(
            f'<rect class="colorbar" x="{bx}" y="{y:.3f}" width="{bw}" height="{PLOT_H / n + 0.5:.3f}" '
            f'fill="{to_hex(cm(frac))}"/>'
        )
    out.append(f'<rect x="{bx}" y="{MARGIN_T}" width="{bw}" height="{PLOT_H}" fill="none" stroke="#000"/>')
    for frac in (0.0, 0.5, 1.0):
        y = MARGIN_T + PLOT_H * (1 - frac)
        label = f"{frac * vmax:.3g}" + ("+" if frac == 1.0 else "")
        out.append(f'<text x="{bx + bw + 4}" y="{y + 4:.3f}">{label}</text>')
    out.append(f'<text x="{bx}" y="{MARGIN_T - 10}">{escape(column)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _theory_paths(row, ks, px, py, ye):
    spec = ProblemSpec(row["mu"], row["L"], int(row["d"]))
    split = ForgetSplit(row["rf"])
    lk = np.linspace(math.log10(ks[0]), math.log10(ks[-1]), 64)
    curves = {
        "trivial": (lambda k: trivial_boundary(spec, split, k), "#d62728"),
        "inefficient": (lambda k: inefficient_boundary(spec, split, k), "#ff7f0e"),
        "efficient": (lambda k: efficient_threshold(spec, split, k), "#ffffff"),
        "e0": (lambda k: spec.e0, "#000000"),
    }
    out = []
    lo, hi = ye[0], ye[-1]
    for name, (fn, colour) in curves.items():
        pts = []
        for x in lk:
            v = fn(10**x)
            if v <= 0:
                continue
            ly = min(max(math.log10(v), lo), hi)
            pts.append(f"{px(x):.3f},{py(ly):.3f}")
        if len(pts) < 2:
            continue
        d = "M " + " L ".join(pts)
        out.append(
            f'<path class="theory-boundary" data-boundary="{name}" d="{d}" fill="none" '
            f'stroke="{colour}" stroke-width="2" stroke-dasharray="6 3"/>'
        )
    return out


def plot_results(in_path, out_path, column: str = "ratio", overlay_theory: bool = False) -> int:
    """Render ``in_path`` to ``out_path``; returns the number of heatmap cells drawn."""
    from .harness import write_text_atomic

    rows = read_results_csv(in_path)
    svg = render_svg(rows, column, overlay_theory)
    write_text_atomic(out_path, svg)
    return len(rows)
