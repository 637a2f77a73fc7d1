"""Numeric kernel: distances, overlap, angles, and the size-scaled
proximity threshold. Everything operates on normalized coordinates and is
pure and stateless.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

from .errors import ConfigError, DegenerateGeometryError
from .model import BBox

# Vectors shorter than this are considered collapsed.
MIN_VECTOR_NORM = 1e-9
# Polygons with less area than this are considered degenerate.
MIN_POLYGON_AREA = 1e-9


class Point(NamedTuple):
    x: float
    y: float


class Vector(NamedTuple):
    dx: float
    dy: float


def center(box: BBox) -> Point:
    """Center of a box (it is stored center-first, so this is a projection)."""
    return Point(box.cx, box.cy)


def euclidean(p: Point, q: Point) -> float:
    """Euclidean distance between two normalized points.

    On non-square frames normalized distance distorts physical distance;
    run points through aspect_correct first when that matters. The default
    pipeline works on square 640x640 frames, where the two coincide.
    """
    return math.hypot(p.x - q.x, p.y - q.y)


def aspect_correct(p: Point, width_px: int, height_px: int) -> Point:
    """Rescale y by the frame's aspect ratio so that euclidean() measures
    physically isotropic distance. Off by default throughout the engine."""
    if width_px <= 0 or height_px <= 0:
        raise ConfigError(f"frame dims must be positive (got {width_px}x{height_px})")
    return Point(p.x, p.y * height_px / width_px)


def iou(a: BBox, b: BBox) -> float:
    """Intersection-over-union of two axis-aligned boxes, in [0, 1].

    Areas are derived from the same corner arithmetic as the intersection
    so that identical boxes score exactly 1.0.
    """
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    area_a = (a.x_max - a.x_min) * (a.y_max - a.y_min)
    area_b = (b.x_max - b.x_min) * (b.y_max - b.y_min)
    union = area_a + area_b - inter
    return inter / union if union > 0.0 else 0.0


def dynamic_threshold(gun: BBox, alpha: float, size_metric: str = "width") -> float:
    """Proximity cutoff scaled to gun size: alpha times the box width.

    size_metric="max_extent" uses max(w, h) instead, which is a better size
    proxy for rotated guns; "width" is the default behavior.
    """
    if alpha <= 0.0:
        raise ConfigError(f"alpha must be > 0 (got {alpha})")
    if size_metric == "width":
        return alpha * gun.w
    if size_metric == "max_extent":
        return alpha * max(gun.w, gun.h)
    raise ConfigError(f"unknown size_metric {size_metric!r}")


def point_in_box(p: Point, box: BBox) -> bool:
    """Boundary-inclusive containment test."""
    return abs(p.x - box.cx) <= box.w / 2 and abs(p.y - box.cy) <= box.h / 2


def angle_deg(u: Vector, v: Vector) -> float:
    """Unsigned angle between two vectors, in degrees [0, 180]."""
    nu = math.hypot(u.dx, u.dy)
    nv = math.hypot(v.dx, v.dy)
    if nu <= MIN_VECTOR_NORM or nv <= MIN_VECTOR_NORM:
        raise DegenerateGeometryError(
            f"cannot measure angle against a near-zero vector (norms {nu}, {nv})"
        )
    cos = (u.dx * v.dx + u.dy * v.dy) / (nu * nv)
    cos = max(-1.0, min(1.0, cos))
    return math.degrees(math.acos(cos))


def _polygon_area(poly: Sequence[Point]) -> float:
    # Shoelace formula; absolute value.
    s = 0.0
    n = len(poly)
    for i in range(n):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % n]
        s += ax * by - bx * ay
    return abs(s) / 2.0


def _on_segment(p: Point, a: Point, b: Point) -> bool:
    cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
    if abs(cross) > 1e-12:
        return False
    return (
        min(a.x, b.x) - 1e-12 <= p.x <= max(a.x, b.x) + 1e-12
        and min(a.y, b.y) - 1e-12 <= p.y <= max(a.y, b.y) + 1e-12
    )


def point_in_polygon(p: Point, poly: Sequence[Point]) -> bool:
    """Ray-casting containment test; the boundary counts as inside."""
    if len(poly) < 3 or _polygon_area(poly) <= MIN_POLYGON_AREA:
        raise DegenerateGeometryError(
            f"polygon with {len(poly)} vertices is degenerate"
        )
    n = len(poly)
    for i in range(n):
        if _on_segment(p, poly[i], poly[(i + 1) % n]):
            return True
    inside = False
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        # Count crossings of a rightward horizontal ray from p.
        if (a.y > p.y) != (b.y > p.y):
            x_at = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y)
            if x_at > p.x:
                inside = not inside
    return inside
