"""Scalar measurements on layer fields (loop size, ring width, corner shape)."""
from __future__ import annotations

import numpy as np

from .microstructure import LayerGrid


def _distances(grid: LayerGrid, center) -> np.ndarray:
    center = grid.center if center is None else center
    x, y = grid.mesh()
    return np.hypot(x - center[0], y - center[1])


def mean_radius(density: np.ndarray, grid: LayerGrid, center=None) -> float:
    """Density-weighted mean distance from ``center``."""
    w = np.asarray(density, dtype=float)
    total = w.sum()
    if total == 0:
        return 0.0
    return float((w * _distances(grid, center)).sum() / total)


def radial_profile(field: np.ndarray, grid: LayerGrid, center=None, bin_width: float | None = None):
    """Azimuthal average in bins of ``bin_width`` (default one cell)."""
    r = _distances(grid, center).ravel()
    h = grid.dx if bin_width is None else bin_width
    idx = np.floor(r / h).astype(int)
    sums = np.bincount(idx, weights=field.ravel())
    counts = np.bincount(idx)
    keep = counts > 0
    radii = (np.arange(sums.size) + 0.5) * h
    return radii[keep], sums[keep] / counts[keep]


def full_width_half_max(x: np.ndarray, y: np.ndarray) -> float:
    """Width of the main peak of ``y(x)`` at half its maximum (linear interpolation)."""
    i = int(np.argmax(y))
    half = 0.5 * y[i]
    lo = i
    while lo > 0 and y[lo - 1] > half:
        lo -= 1
    hi = i
    while hi < len(y) - 1 and y[hi + 1] > half:
        hi += 1
    left = x[lo]
    if lo > 0:
        left = np.interp(half, [y[lo - 1], y[lo]], [x[lo - 1], x[lo]])
    right = x[hi]
    if hi < len(y) - 1:
        right = np.interp(half, [y[hi + 1], y[hi]], [x[hi + 1], x[hi]])
    return float(right - left)


def ring_width(density: np.ndarray, grid: LayerGrid, center=None) -> float:
    radii, prof = radial_profile(density, grid, center)
    return full_width_half_max(radii, prof)


def _crossing(samples: np.ndarray, positions: np.ndarray, level: float) -> float:
    """First position (from the start) where ``samples`` drops through ``level``."""
    below = np.nonzero(samples < level)[0]
    if below.size == 0 or below[0] == 0:
        raise ValueError("level not crossed along the probe line")
    k = below[0]
    return float(np.interp(level, [samples[k], samples[k - 1]], [positions[k], positions[k - 1]]))


def corner_radius(phi: np.ndarray, grid: LayerGrid, level: float, center_index=None) -> float:
    """Corner rounding radius of the ``phi = level`` contour of a square loop.

    With ``s`` the half-side measured along the +x axis and ``d`` the
    distance to the contour along the diagonal, a square with corners
    rounded by arcs of radius ``r`` has ``d = sqrt(2) (s - r) + r``.
    Needs ``dx == dy``.
    """
    if not np.isclose(grid.dx, grid.dy):
        raise ValueError("corner measurement needs square pixels")
    cj, ck = (grid.n1 // 2, grid.n2 // 2) if center_index is None else center_index
    m = min(grid.n1 - cj, grid.n2 - ck)
    steps = np.arange(m)
    s = _crossing(phi[cj + steps, ck], steps * grid.dx, level)
    d = _crossing(phi[cj + steps, ck + steps], steps * grid.dx * np.sqrt(2.0), level)
    return float((np.sqrt(2.0) * s - d) / (np.sqrt(2.0) - 1.0))


def level_area(phi: np.ndarray, grid: LayerGrid, level: float) -> float:
    """Area of ``{phi > level}`` by pixel count."""
    return float(np.count_nonzero(phi > level) * grid.dx * grid.dy)


def disk_neighbourhood(mask: np.ndarray, cells: int) -> np.ndarray:
    """Periodic dilation of a boolean mask by ``cells`` pixels (square stencil)."""
    out = mask.copy()
    for di in range(-cells, cells + 1):
        for dj in range(-cells, cells + 1):
            out |= np.roll(mask, (di, dj), axis=(0, 1))
    return out
