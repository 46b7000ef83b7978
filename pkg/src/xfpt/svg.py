"""Minimal SVG output: log-x line charts and grid path overlays."""
from __future__ import annotations

import math
from html import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b")


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    step = 10 ** math.floor(math.log10((hi - lo) / n))
    for mult in (1, 2, 5, 10):
        if (hi - lo) / (step * mult) <= n:
            step *= mult
            break
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step) + 1)]


def line_chart(
    series: dict,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    logx: bool = True,
    width: int = 640,
    height: int = 420,
) -> str:
    """``series`` maps a label to ``(xs, ys)``; returns the SVG document."""
    ml, mr, mt, mb = 70, 150, 40, 55
    pw, ph = width - ml - mr, height - mt - mb
    xs_all = np.concatenate([np.asarray(v[0], float) for v in series.values()])
    ys_all = np.concatenate([np.asarray(v[1], float) for v in series.values()])
    fx = np.log10 if logx else (lambda a: np.asarray(a, float))
    x_lo, x_hi = float(np.min(fx(xs_all))), float(np.max(fx(xs_all)))
    y_lo, y_hi = 0.0 if ys_all.min() >= 0 else float(ys_all.min()), float(ys_all.max())
    y_hi = y_hi * 1.05 if y_hi > 0 else y_hi + 1
    x_hi = x_hi if x_hi > x_lo else x_lo + 1

    def px(x):
        return ml + (fx(x) - x_lo) / (x_hi - x_lo) * pw

    def py(y):
        return mt + ph - (np.asarray(y, float) - y_lo) / (y_hi - y_lo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{ml + pw / 2}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    if logx:
        for d in range(math.ceil(x_lo), math.floor(x_hi) + 1):
            x = ml + (d - x_lo) / (x_hi - x_lo) * pw
            out.append(f'<line x1="{x:.1f}" y1="{mt + ph}" x2="{x:.1f}" y2="{mt + ph + 5}" stroke="black"/>')
            out.append(f'<text x="{x:.1f}" y="{mt + ph + 18}" text-anchor="middle">1e{d}</text>')
    else:
        for v in _nice_ticks(x_lo, x_hi):
            x = ml + (v - x_lo) / (x_hi - x_lo) * pw
            out.append(f'<text x="{x:.1f}" y="{mt + ph + 18}" text-anchor="middle">{v:g}</text>')
    for v in _nice_ticks(y_lo, y_hi):
        y = float(py(v))
        out.append(f'<line x1="{ml - 5}" y1="{y:.1f}" x2="{ml}" y2="{y:.1f}" stroke="black"/>')
        out.append(f'<text x="{ml - 8}" y="{y + 4:.1f}" text-anchor="end">{v:g}</text>')
    out.append(f'<text x="{ml + pw / 2}" y="{height - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(
        f'<text x="18" y="{mt + ph / 2}" text-anchor="middle" transform="rotate(-90 18 {mt + ph / 2})">{escape(ylabel)}</text>'
    )
    for i, (label, (xs, ys)) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px(np.asarray(xs, float)), py(ys)))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
        ly = mt + 16 + 18 * i
        out.append(f'<line x1="{ml + pw + 12}" y1="{ly}" x2="{ml + pw + 36}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 42}" y="{ly + 4}">{escape(str(label))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def path_overlay(fld, regions=None, paths=(), highlight=None, scale: float | None = None) -> str:
    """Grid picture: slow cells white, fast cells grey, obstacles black, targets red.

    ``paths`` are thin (n, 2) polylines; ``highlight`` is drawn thick in blue.
    """
    scale = scale or max(2.0, 600.0 / max(fld.nx, fld.ny))
    W, H = fld.nx * scale, fld.ny * scale
    lo, hi = fld.eigenvalues()
    fast = hi >= 0.5 * float(hi[~fld.obstacles].max()) if (~fld.obstacles).any() else hi > 0

    def xy(p):
        p = np.asarray(p, float)
        return p[:, 0] / fld.h * scale, H - p[:, 1] / fld.h * scale

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W:.0f}" height="{H:.0f}">',
        f'<rect width="{W:.0f}" height="{H:.0f}" fill="white" stroke="black"/>',
    ]
    layers = [(fast & ~fld.obstacles, "#d9d9d9"), (fld.obstacles, "black")]
    if regions is not None:
        layers += [(regions.targets, "#e41a1c"), (regions.sources, "#4daf4a")]
    for mask, color in layers:
        iy, ix = np.nonzero(mask)
        for a, b in zip(ix, iy):
            out.append(
                f'<rect x="{a * scale:.1f}" y="{H - (b + 1) * scale:.1f}" width="{scale:.1f}" height="{scale:.1f}" fill="{color}"/>'
            )
    for p in paths:
        if len(p) < 2:
            continue
        X, Y = xy(p)
        pts = " ".join(f"{a:.1f},{b:.1f}" for a, b in zip(X, Y))
        out.append(f'<polyline points="{pts}" fill="none" stroke="#555555" stroke-width="0.7" opacity="0.7"/>')
    if highlight is not None and len(highlight) >= 2:
        X, Y = xy(highlight)
        pts = " ".join(f"{a:.1f},{b:.1f}" for a, b in zip(X, Y))
        out.append(f'<polyline points="{pts}" fill="none" stroke="#1f4fd8" stroke-width="3"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
