"""Scanline-free 2D triangle coverage with a half-open fill rule.

Used by both the UV-space texture bake and the screen-space rasterizer.
Sample points are cell centers ``(col + 0.5, row + 0.5)`` of an ``H x W``
grid. A center lying exactly on an edge is claimed by at most one of the
two triangles sharing that edge (given consistent winding): the zero
edge-value counts as inside only when the directed edge points "up", or
points "right" when horizontal. Degenerate (zero-area) triangles cover
nothing.
"""

from __future__ import annotations

import numpy as np

__all__ = ["triangle_coverage", "signed_area2"]


def signed_area2(p0, p1, p2) -> float:
    """Twice the signed area of the triangle (cross product of two edges)."""
    return float((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0]))


def _zero_edge_inside(dx: float, dy: float) -> bool:
    # Half-open rule on the directed edge; exactly one of (d, -d) qualifies.
    return dy > 0.0 or (dy == 0.0 and dx > 0.0)


def triangle_coverage(p0, p1, p2, grid_shape):
    """Cell centers covered by the triangle, with their barycentrics.

    Returns ``(rows, cols, bary)`` where ``bary`` has shape ``(n, 3)``,
    is ordered like the input vertices and sums to 1 per row. ``rows`` and
    ``cols`` index an ``(H, W)`` grid whose cell ``(r, c)`` has its center
    at ``(c + 0.5, r + 0.5)``.
    """
    height, width = grid_shape
    p0 = np.asarray(p0, float)
    p1 = np.asarray(p1, float)
    p2 = np.asarray(p2, float)
    area2 = signed_area2(p0, p1, p2)
    empty = (np.empty(0, np.intp), np.empty(0, np.intp), np.empty((0, 3)))
    if area2 == 0.0:
        return empty

    xs = (p0[0], p1[0], p2[0])
    ys = (p0[1], p1[1], p2[1])
    c0 = max(int(np.floor(min(xs) - 0.5)), 0)
    c1 = min(int(np.ceil(max(xs) - 0.5)), width - 1)
    r0 = max(int(np.floor(min(ys) - 0.5)), 0)
    r1 = min(int(np.ceil(max(ys) - 0.5)), height - 1)
    if c0 > c1 or r0 > r1:
        return empty

    px = np.arange(c0, c1 + 1) + 0.5
    py = np.arange(r0, r1 + 1) + 0.5
    gx, gy = np.meshgrid(px, py)

    # Edge i is opposite vertex i; e_i / area2 is the barycentric of vertex i.
    def edge(a, b):
        return (b[0] - a[0]) * (gy - a[1]) - (b[1] - a[1]) * (gx - a[0])

    e0 = edge(p1, p2)
    e1 = edge(p2, p0)
    e2 = edge(p0, p1)
    sign = 1.0 if area2 > 0.0 else -1.0

    def accept(e, a, b):
        z = _zero_edge_inside(b[0] - a[0], b[1] - a[1])
        se = sign * e
        return (se > 0.0) | ((e == 0.0) & z)

    inside = accept(e0, p1, p2) & accept(e1, p2, p0) & accept(e2, p0, p1)
    if not inside.any():
        return empty
    iy, ix = np.nonzero(inside)
    bary = np.stack([e0[iy, ix], e1[iy, ix], e2[iy, ix]], axis=1) / area2
    return iy + r0, ix + c0, bary
