"""
Static SVG rendering of a scene and its segmentation.

Output is formatted by hand with fixed precision so identical inputs give
byte-identical files.
"""

from typing import List, Optional

import numpy as np

from base_model_class import PointSet
from clustering import Segmentation, Structure
from geometry import get_model_class

SIZE = 600
MARGIN = 20
POINT_RADIUS = 2.5
OUTLIER_COLOR = "#999999"
PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
    "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f",
)
CURVE_SAMPLES = 64


class _Viewport:
    """Maps data coordinates to SVG pixels with the y axis pointing up."""

    def __init__(self, points: np.ndarray):
        lo, hi = points.min(axis=0), points.max(axis=0)
        span = float(max(hi - lo)) or 1.0
        self.lo = lo - 0.05 * span
        self.scale = (SIZE - 2 * MARGIN) / (1.1 * span)

    def map(self, xy: np.ndarray) -> np.ndarray:
        xy = np.atleast_2d(xy)
        px = MARGIN + (xy[:, 0] - self.lo[0]) * self.scale
        py = SIZE - MARGIN - (xy[:, 1] - self.lo[1]) * self.scale
        return np.column_stack([px, py])


def _polyline(view: _Viewport, xy: np.ndarray, color: str) -> str:
    coords = " ".join(f"{x:.4f},{y:.4f}" for x, y in view.map(xy))
    return f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>'


def _curve(view: _Viewport, structure: Structure, members: np.ndarray, color: str) -> str:
    params = structure.model.params
    if structure.class_id == "line":
        direction = get_model_class("line").direction(structure.model)
        t = members @ direction
        nx, ny, c = params
        foot = c * np.array([nx, ny])
        ends = foot + np.outer([t.min(), t.max()], direction)
        return _polyline(view, ends, color)
    if structure.class_id == "circle":
        cx, cy, radius = params
        (px, py), = view.map(np.array([cx, cy]))
        return (
            f'<circle cx="{px:.4f}" cy="{py:.4f}" r="{radius * view.scale:.4f}" '
            f'fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
    if structure.class_id == "parabola":
        a, b, c = params
        x = np.linspace(members[:, 0].min(), members[:, 0].max(), CURVE_SAMPLES)
        return _polyline(view, np.column_stack([x, (a * x + b) * x + c]), color)
    raise ValueError(f"cannot draw class {structure.class_id!r}")


def render_svg(data: PointSet, segmentation: Optional[Segmentation] = None) -> str:
    """Points colored by structure, outliers gray, fitted curves overdrawn."""
    if segmentation is not None and segmentation.n_points != data.N:
        raise ValueError(
            f"segmentation covers {segmentation.n_points} points, scene has {data.N}"
        )
    view = _Viewport(data.points)
    labels = segmentation.labels if segmentation is not None else np.zeros(data.N, dtype=int)

    lines: List[str] = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" '
        f'viewBox="0 0 {SIZE} {SIZE}">',
        f'<rect width="{SIZE}" height="{SIZE}" fill="white"/>',
    ]
    for (px, py), label in zip(view.map(data.points), labels):
        color = OUTLIER_COLOR if label == 0 else PALETTE[(label - 1) % len(PALETTE)]
        lines.append(f'<circle cx="{px:.4f}" cy="{py:.4f}" r="{POINT_RADIUS}" fill="{color}"/>')

    if segmentation is not None:
        for k, structure in enumerate(segmentation.structures, start=1):
            color = PALETTE[(k - 1) % len(PALETTE)]
            members = data.points[structure.member_indices]
            lines.append(_curve(view, structure, members, color))
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
