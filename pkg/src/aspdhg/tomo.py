"""Parallel-beam ray projector with pixel-intersection-length weights.

Geometry: a ``grid`` x ``grid`` image of unit pixels centered at the origin,
row-major flattening (pixel (r, c) -> r*grid + c).  For projection angle theta
the detector axis is omega = (cos t, sin t) and rays travel along
(-sin t, cos t); the ray for detector offset s passes through s*omega.
Detector offsets are centered and span the image diagonal.  Each matrix row
holds the exact chord length of one ray inside each pixel it crosses (Siddon
traversal), so applying the operator integrates the image along rays.

Rays exactly parallel to an axis may lie on a pixel boundary; those use a
dedicated tracer with the half-open convention [lo, hi) — the boundary ray
belongs to the pixel on its upper side — so a centered ray at angle 0 sums a
constant-1 image to exactly ``grid``.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp

from .linop import MatrixMap
from .validation import check_positive_int

__all__ = ["ProjectorMap", "toy_projector", "trace_ray"]

# Below this, a direction component is treated as exactly axis-aligned.
_AXIS_EPS = 1e-12


class ProjectorMap(MatrixMap):
    """Projector operator of shape (n_angles*n_detectors) x grid^2."""

    def __init__(self, mat, grid, angles, offsets):
        super().__init__(mat)
        self.grid = grid
        self.angles = angles
        self.offsets = offsets
        self.n_angles = len(angles)
        self.n_detectors = len(offsets)


def trace_ray(grid: int, theta: float, s: float):
    """Pixel indices and chord lengths for one ray.

    Parameters
    ----------
    grid : int
        Image side length in pixels.
    theta : float
        Projection angle in radians.
    s : float
        Signed detector offset from the rotation center.

    Returns
    -------
    (indices, lengths) : (list[int], list[float])
        Flat row-major pixel indices and the ray's chord length inside each.
    """
    ct, st = math.cos(theta), math.sin(theta)
    ox, oy = s * ct, s * st  # a point on the ray
    dx, dy = -st, ct         # unit direction of travel
    if abs(dx) < _AXIS_EPS:
        return _trace_axis_aligned(grid, ox, vertical=True)
    if abs(dy) < _AXIS_EPS:
        return _trace_axis_aligned(grid, oy, vertical=False)
    return _trace_general(grid, ox, oy, dx, dy)


def _trace_axis_aligned(grid: int, coord: float, vertical: bool):
    # The ray runs along one full row or column; every crossed pixel
    # contributes a chord of exactly 1.  Half-open assignment at boundaries.
    u = coord + grid / 2.0
    if u < 0.0 or u >= grid:
        return [], []
    line = int(math.floor(u))
    if vertical:
        idx = [r * grid + line for r in range(grid)]
    else:
        idx = [line * grid + c for c in range(grid)]
    return idx, [1.0] * grid


def _trace_general(grid: int, ox: float, oy: float, dx: float, dy: float):
    h = grid / 2.0
    # Clip the ray parameter to the image box (both direction components
    # are nonzero on this path).
    tx0, tx1 = sorted(((-h - ox) / dx, (h - ox) / dx))
    ty0, ty1 = sorted(((-h - oy) / dy, (h - oy) / dy))
    t_lo = max(tx0, ty0)
    t_hi = min(tx1, ty1)
    if t_hi - t_lo <= 1e-12:
        return [], []

    ex, ey = ox + t_lo * dx, oy + t_lo * dy
    ix = min(max(int(math.floor(ex + h)), 0), grid - 1)
    iy = min(max(int(math.floor(ey + h)), 0), grid - 1)
    step_x = 1 if dx > 0 else -1
    step_y = 1 if dy > 0 else -1
    # Parameter values at the next pixel-boundary crossings.
    bx = (ix + 1 if dx > 0 else ix) - h
    by = (iy + 1 if dy > 0 else iy) - h
    t_x = (bx - ox) / dx
    t_y = (by - oy) / dy
    dt_x = 1.0 / abs(dx)
    dt_y = 1.0 / abs(dy)

    idx: list[int] = []
    lengths: list[float] = []
    t = t_lo
    while t < t_hi - 1e-12:
        t_next = min(t_x, t_y, t_hi)
        seg = t_next - t
        if seg > 0.0 and 0 <= ix < grid and 0 <= iy < grid:
            idx.append(iy * grid + ix)
            lengths.append(seg)
        if t_next >= t_hi - 1e-12:
            break
        if t_x <= t_y:
            ix += step_x
            t_x += dt_x
        else:
            iy += step_y
            t_y += dt_y
        t = t_next
        if ix < 0 or ix >= grid or iy < 0 or iy >= grid:
            break
    return idx, lengths


def toy_projector(grid: int, n_angles: int, n_detectors: int,
                  angle_range: tuple[float, float] = (0.0, math.pi)) -> ProjectorMap:
    """Assemble the parallel-beam projector as a sparse row-per-ray operator.

    Parameters
    ----------
    grid : int
        Image side length (>= 2).
    n_angles : int
        Number of projection angles, spaced evenly over the half-open
        ``angle_range``.
    n_detectors : int
        Detector elements per angle; offsets are centered and span the image
        diagonal (an odd count puts one ray exactly through the center).
    angle_range : (float, float)
        Angular span in radians, default [0, pi).

    Returns
    -------
    ProjectorMap
        Ray order is angle-major: row = angle_index * n_detectors + det_index.
        All entries are nonnegative chord lengths.
    """
    grid = check_positive_int("grid", grid)
    if grid < 2:
        raise ValueError("grid must be at least 2")
    n_angles = check_positive_int("n_angles", n_angles)
    n_detectors = check_positive_int("n_detectors", n_detectors)
    lo, hi = float(angle_range[0]), float(angle_range[1])
    if not hi > lo:
        raise ValueError("angle_range must be an increasing pair")

    angles = lo + (hi - lo) * np.arange(n_angles) / n_angles
    spacing = grid * math.sqrt(2.0) / n_detectors
    offsets = (np.arange(n_detectors) - (n_detectors - 1) / 2.0) * spacing

    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for theta in angles:
        for s in offsets:
            idx, lengths = trace_ray(grid, float(theta), float(s))
            indices.extend(idx)
            data.extend(lengths)
            indptr.append(len(indices))
    mat = sp.csr_matrix(
        (np.asarray(data), np.asarray(indices, dtype=np.int32), np.asarray(indptr)),
        shape=(n_angles * n_detectors, grid * grid),
    )
    return ProjectorMap(mat, grid, angles, offsets)
