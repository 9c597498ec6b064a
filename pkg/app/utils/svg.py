"""Minimal SVG line plots emitted as text."""

import math
from collections.abc import Sequence
from xml.sax.saxutils import escape

WIDTH = 640
HEIGHT = 400
MARGIN = 60
TICKS = 5
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def _scale(lo: float, hi: float, size: float, flip: bool) -> tuple[float, float]:
    span = hi - lo if hi > lo else 1.0
    k = size / span
    return (-k, MARGIN + size + k * lo) if flip else (k, MARGIN - k * lo)


def line_plot(
    series: Sequence[tuple[str, Sequence[float], Sequence[float]]],
    *,
    title: str,
    xlabel: str,
    ylabel: str,
    log_x: bool = False,
) -> str:
    """Polylines for each (label, xs, ys) with axes, ticks and a legend.

    Non-finite points are dropped; ``log_x`` plots log10 of x.
    """
    cleaned = []
    for label, xs, ys in series:
        pts = [
            (math.log10(x) if log_x else x, y)
            for x, y in zip(xs, ys, strict=True)
            if math.isfinite(y) and math.isfinite(x) and (x > 0 or not log_x)
        ]
        cleaned.append((label, pts))
    all_pts = [p for _, pts in cleaned for p in pts] or [(0.0, 0.0), (1.0, 1.0)]
    x_lo, x_hi = min(p[0] for p in all_pts), max(p[0] for p in all_pts)
    y_lo, y_hi = min(p[1] for p in all_pts), max(p[1] for p in all_pts)
    inner_w = WIDTH - 2 * MARGIN
    inner_h = HEIGHT - 2 * MARGIN
    kx, bx = _scale(x_lo, x_hi, inner_w, flip=False)
    ky, by = _scale(y_lo, y_hi, inner_h, flip=True)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="{MARGIN / 2}" text-anchor="middle">{escape(title)}</text>',
        f'<line x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{WIDTH - MARGIN}" '
        f'y2="{HEIGHT - MARGIN}" stroke="black"/>',
        f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{HEIGHT - MARGIN}" stroke="black"/>',
    ]
    for i in range(TICKS + 1):
        xv = x_lo + (x_hi - x_lo) * i / TICKS
        yv = y_lo + (y_hi - y_lo) * i / TICKS
        px, py = kx * xv + bx, ky * yv + by
        xtext = f"1e{xv:.1f}" if log_x else f"{xv:.3g}"
        out.append(
            f'<line x1="{px:.2f}" y1="{HEIGHT - MARGIN}" x2="{px:.2f}" '
            f'y2="{HEIGHT - MARGIN + 5}" stroke="black"/>'
        )
        out.append(
            f'<text x="{px:.2f}" y="{HEIGHT - MARGIN + 18}" font-size="10" '
            f'text-anchor="middle">{xtext}</text>'
        )
        out.append(
            f'<line x1="{MARGIN - 5}" y1="{py:.2f}" x2="{MARGIN}" y2="{py:.2f}" stroke="black"/>'
        )
        out.append(
            f'<text x="{MARGIN - 8}" y="{py + 3:.2f}" font-size="10" '
            f'text-anchor="end">{yv:.3g}</text>'
        )
    out.append(
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 15}" text-anchor="middle">{escape(xlabel)}</text>'
    )
    out.append(
        f'<text x="15" y="{HEIGHT / 2}" text-anchor="middle" '
        f'transform="rotate(-90 15 {HEIGHT / 2})">{escape(ylabel)}</text>'
    )
    for idx, (label, pts) in enumerate(cleaned):
        color = COLORS[idx % len(COLORS)]
        coords = " ".join(f"{kx * x + bx:.2f},{ky * y + by:.2f}" for x, y in pts)
        out.append(f'<polyline fill="none" stroke="{color}" points="{coords}"/>')
        out.append(
            f'<text x="{WIDTH - MARGIN}" y="{MARGIN + 14 * idx}" font-size="11" '
            f'text-anchor="end" fill="{color}">{escape(label)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
