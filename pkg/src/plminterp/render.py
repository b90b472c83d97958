"""SVG heatmaps of decision features (red positive, blue negative, white zero)."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np


def cell_color(value: float, vmax: float) -> str:
    if vmax <= 0 or value == 0:
        return "#ffffff"
    t = min(abs(value) / vmax, 1.0)
    fade = round(255 * (1.0 - t))
    if value > 0:
        return f"#ff{fade:02x}{fade:02x}"
    return f"#{fade:02x}{fade:02x}ff"


def render_heatmap(weights, shape: tuple[int, int], cell: int = 12, title: str | None = None) -> str:
    """Grid of ``shape`` cells, row-major, colour scale symmetric at max |weight|."""
    w = np.asarray(getattr(weights, "weights", weights), dtype=np.float64).ravel()
    h, wd = shape
    if h * wd != w.size:
        raise ValueError(f"grid {h}x{wd} does not hold {w.size} features")
    vmax = float(np.max(np.abs(w))) if w.size else 0.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{wd * cell}" height="{h * cell}" '
        f'viewBox="0 0 {wd * cell} {h * cell}">'
    ]
    if title:
        parts.append(f"<title>{escape(title)}</title>")
    for k, v in enumerate(w):
        i, j = divmod(k, wd)
        parts.append(
            f'<rect x="{j * cell}" y="{i * cell}" width="{cell}" height="{cell}" '
            f'fill="{cell_color(v, vmax)}" data-weight="{float(v)!r}"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts)
