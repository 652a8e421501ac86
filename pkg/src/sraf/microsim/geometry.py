"""Planar geometry helpers for the micro-simulator.

All routines are pure numpy with a fixed operation order, so results are
reproducible bit-for-bit for identical inputs.
"""

from __future__ import annotations

import numpy as np


def seg_point_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each point (N, 2) to segment ab."""
    points = np.atleast_2d(points)
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.hypot(points[:, 0] - a[0], points[:, 1] - a[1])
    t = np.clip(((points - a) @ ab) / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    d = points - proj
    return np.hypot(d[:, 0], d[:, 1])


def polyline_point_distance(points: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Distance from each point to the nearest segment of a polyline."""
    points = np.atleast_2d(points)
    best = np.full(len(points), np.inf)
    for i in range(len(poly) - 1):
        best = np.minimum(best, seg_point_distance(points, poly[i], poly[i + 1]))
    return best


def cumulative_lengths(poly: np.ndarray) -> np.ndarray:
    """Arc length from the first vertex to each vertex."""
    d = np.hypot(np.diff(poly[:, 0]), np.diff(poly[:, 1]))
    return np.concatenate(([0.0], np.cumsum(d)))


def point_along(poly: np.ndarray, cum: np.ndarray, s: float) -> tuple[np.ndarray, float]:
    """Point and tangent heading at arc offset s (clamped to the polyline)."""
    total = cum[-1]
    s = min(max(s, 0.0), total)
    i = int(np.searchsorted(cum, s, side="right") - 1)
    i = min(i, len(poly) - 2)
    seg_len = cum[i + 1] - cum[i]
    t = 0.0 if seg_len == 0 else (s - cum[i]) / seg_len
    p = poly[i] + t * (poly[i + 1] - poly[i])
    heading = float(np.arctan2(poly[i + 1][1] - poly[i][1], poly[i + 1][0] - poly[i][0]))
    return p, heading


def segments_intersect(p1, p2, p3, p4) -> bool:
    """True when closed segments p1p2 and p3p4 intersect."""

    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if v > 0:
            return 1
        if v < 0:
            return -1
        return 0

    def on_seg(a, b, c):
        return (
            min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
            and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])
        )

    o1, o2 = orient(p1, p2, p3), orient(p1, p2, p4)
    o3, o4 = orient(p3, p4, p1), orient(p3, p4, p2)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and on_seg(p1, p2, p3):
        return True
    if o2 == 0 and on_seg(p1, p2, p4):
        return True
    if o3 == 0 and on_seg(p3, p4, p1):
        return True
    if o4 == 0 and on_seg(p3, p4, p2):
        return True
    return False


def obb_corners(cx: float, cy: float, heading: float, hx: float, hy: float) -> np.ndarray:
    """Corners of an oriented box, CCW starting front-left."""
    c, s = np.cos(heading), np.sin(heading)
    fwd = np.array([c, s])
    left = np.array([-s, c])
    center = np.array([cx, cy])
    return np.array([
        center + hx * fwd + hy * left,
        center - hx * fwd + hy * left,
        center - hx * fwd - hy * left,
        center + hx * fwd - hy * left,
    ])


def obb_overlap(a_corners: np.ndarray, b_corners: np.ndarray) -> bool:
    """Separating-axis test for two convex quads."""
    for quad in (a_corners, b_corners):
        for i in range(4):
            edge = quad[(i + 1) % 4] - quad[i]
            axis = np.array([-edge[1], edge[0]])
            pa = a_corners @ axis
            pb = b_corners @ axis
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True


def point_in_obb(points: np.ndarray, cx: float, cy: float, heading: float,
                 hx: float, hy: float) -> np.ndarray:
    """Membership of each point (N, 2) in an oriented box."""
    c, s = np.cos(heading), np.sin(heading)
    dx = points[:, 0] - cx
    dy = points[:, 1] - cy
    local_x = dx * c + dy * s
    local_y = -dx * s + dy * c
    return (np.abs(local_x) <= hx) & (np.abs(local_y) <= hy)


def ray_obb_ranges(origin: np.ndarray, angles: np.ndarray, cx: float, cy: float,
                   heading: float, hx: float, hy: float) -> np.ndarray:
    """Nearest-hit range for each ray against one oriented box (inf = miss).

    Slab method in the box frame; rays start at ``origin`` with world-frame
    ``angles``.
    """
    c, s = np.cos(heading), np.sin(heading)
    ox = (origin[0] - cx) * c + (origin[1] - cy) * s
    oy = -(origin[0] - cx) * s + (origin[1] - cy) * c
    dxw, dyw = np.cos(angles), np.sin(angles)
    dx = dxw * c + dyw * s
    dy = -dxw * s + dyw * c

    with np.errstate(divide="ignore", invalid="ignore"):
        tx1 = (-hx - ox) / dx
        tx2 = (hx - ox) / dx
        ty1 = (-hy - oy) / dy
        ty2 = (hy - oy) / dy
    txmin = np.minimum(tx1, tx2)
    txmax = np.maximum(tx1, tx2)
    tymin = np.minimum(ty1, ty2)
    tymax = np.maximum(ty1, ty2)
    # Parallel rays: the slab constrains only via the offset.
    txmin = np.where(dx == 0, np.where(np.abs(ox) <= hx, -np.inf, np.inf), txmin)
    txmax = np.where(dx == 0, np.where(np.abs(ox) <= hx, np.inf, -np.inf), txmax)
    tymin = np.where(dy == 0, np.where(np.abs(oy) <= hy, -np.inf, np.inf), tymin)
    tymax = np.where(dy == 0, np.where(np.abs(oy) <= hy, np.inf, -np.inf), tymax)

    tmin = np.maximum(txmin, tymin)
    tmax = np.minimum(txmax, tymax)
    hit = (tmax >= tmin) & (tmax >= 0)
    t = np.where(tmin >= 0, tmin, tmax)  # origin inside box: first exit
    return np.where(hit, t, np.inf)
