"""Initial plastic distortions ``phi = Up_13`` and drag fields on the layer grid.

All lengths are in units of b. A loop is a plateau of height ``amplitude *
width`` bounded by a linear ramp of the given ``width``, so the density
magnitude inside the ramp equals ``amplitude``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .hj import alpha_norm


@dataclass(frozen=True)
class LayerGrid:
    """Periodic 2D grid of the slip layer (or a 1D line when ``n2 == 1``)."""

    n1: int
    n2: int
    length1: float
    length2: float

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError("layer grid sizes must be >= 1")
        if not (self.length1 > 0 and self.length2 > 0):
            raise ValueError("layer lengths must be positive")

    @classmethod
    def square(cls, n: int, length: float) -> "LayerGrid":
        return cls(n, n, length, length)

    @property
    def dx(self) -> float:
        return self.length1 / self.n1

    @property
    def dy(self) -> float:
        return self.length2 / self.n2

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n1, self.n2)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.arange(self.n1) * self.dx
        y = np.arange(self.n2) * self.dy
        return np.meshgrid(x, y, indexing="ij")

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * self.length1, 0.5 * self.length2)


def _ramp_profile(distance: np.ndarray, half_size: float, width: float, amplitude: float) -> np.ndarray:
    if width <= 0 or amplitude < 0:
        raise ValueError("width must be > 0 and amplitude >= 0")
    return amplitude * width * np.clip((half_size + 0.5 * width - distance) / width, 0.0, 1.0)


def _check_fits(grid: LayerGrid, center, extent: float) -> None:
    cx, cy = center
    if (cx - extent < 0 or cx + extent > grid.length1
            or cy - extent < 0 or cy + extent > grid.length2):
        raise ValueError("loop geometry exceeds the layer cell")


def circular_loop(grid: LayerGrid, radius: float, width: float = 10.0, amplitude: float = 1e-2,
                  center: tuple[float, float] | None = None) -> np.ndarray:
    """Circular loop; the ramp is centered on ``radius``."""
    center = grid.center if center is None else center
    _check_fits(grid, center, radius + 0.5 * width)
    x, y = grid.mesh()
    r = np.hypot(x - center[0], y - center[1])
    return _ramp_profile(r, radius, width, amplitude)


def square_loop(grid: LayerGrid, half_side: float, width: float = 10.0, amplitude: float = 1e-2,
                center: tuple[float, float] | None = None) -> np.ndarray:
    """Axis-aligned square loop (level sets are squares with sharp corners)."""
    center = grid.center if center is None else center
    _check_fits(grid, center, half_side + 0.5 * width)
    x, y = grid.mesh()
    d = np.maximum(np.abs(x - center[0]), np.abs(y - center[1]))
    return _ramp_profile(d, half_side, width, amplitude)


def half_square_waves(n: int, length: float, left: tuple[float, float] = (46.0, 56.0),
                      right: tuple[float, float] = (264.0, 274.0), amplitude: float = 1e-2) -> np.ndarray:
    """1D profile whose slope is ``-amplitude`` on ``left`` and ``+amplitude`` on ``right``.

    With ``v0 = -1`` both blocks travel towards the center of the gap.
    """
    (l0, l1), (r0, r1) = left, right
    if not (0 <= l0 < l1 < r0 < r1 <= length):
        raise ValueError("blocks must be ordered and lie inside the cell")
    if not np.isclose(l1 - l0, r1 - r0):
        raise ValueError("both blocks need the same width")
    x = np.arange(n) * (length / n)
    plateau = amplitude * (l1 - l0)
    return (plateau - plateau * np.clip((x - l0) / (l1 - l0), 0.0, 1.0)
            + plateau * np.clip((x - r0) / (r1 - r0), 0.0, 1.0))


def _normalize(phi: np.ndarray, grid: LayerGrid, target: float) -> np.ndarray:
    phi = phi - phi.mean()
    peak = alpha_norm(phi, grid.dx, grid.dy).max()
    if peak == 0:
        raise ValueError("degenerate random field")
    phi = phi * (target / peak)
    return phi - phi.mean()


def gaussian_lowpass(field: np.ndarray, grid: LayerGrid, wavelength: float) -> np.ndarray:
    """Spectral Gaussian filter whose transfer is exp(-1/2) at ``wavelength``."""
    if wavelength <= 0:
        raise ValueError("smoothing wavelength must be positive")
    k1 = 2 * np.pi * sfft.fftfreq(grid.n1, d=grid.dx)[:, None]
    k2 = 2 * np.pi * sfft.rfftfreq(grid.n2, d=grid.dy)[None, :]
    kc = 2 * np.pi / wavelength
    transfer = np.exp(-0.5 * (k1 ** 2 + k2 ** 2) / kc ** 2)
    return sfft.irfft2(sfft.rfft2(field) * transfer, s=field.shape)


def random_noisy(grid: LayerGrid, target_alpha: float, rng: np.random.Generator) -> np.ndarray:
    """White-noise distortion with zero mean and ``max ||alpha|| == target_alpha``."""
    return _normalize(rng.uniform(-1.0, 1.0, grid.shape), grid, target_alpha)


def random_smoothed(grid: LayerGrid, target_alpha: float, rng: np.random.Generator,
                    wavelength: float = 40.0) -> np.ndarray:
    """Low-passed version of :func:`random_noisy`, renormalized to the same targets."""
    noise = rng.uniform(-1.0, 1.0, grid.shape)
    return _normalize(gaussian_lowpass(noise, grid, wavelength), grid, target_alpha)


def disk_mask(grid: LayerGrid, centers, radius: float) -> np.ndarray:
    """Union of periodic disks."""
    x, y = grid.mesh()
    mask = np.zeros(grid.shape, dtype=bool)
    for cx, cy in centers:
        dx = (x - cx + 0.5 * grid.length1) % grid.length1 - 0.5 * grid.length1
        dy = (y - cy + 0.5 * grid.length2) % grid.length2 - 0.5 * grid.length2
        mask |= dx * dx + dy * dy <= radius * radius
    return mask


def random_disk_centers(grid: LayerGrid, count: int, radius: float, rng: np.random.Generator,
                        gap: float = 0.0, exclude: np.ndarray | None = None,
                        max_tries: int = 10000) -> list[tuple[float, float]]:
    """Uniform placement with rejection of overlapping disks (and of disks
    touching ``exclude``)."""
    centers: list[tuple[float, float]] = []
    tries = 0
    while len(centers) < count:
        tries += 1
        if tries > max_tries:
            raise ValueError(f"could only place {len(centers)} of {count} precipitates")
        c = (rng.uniform(0, grid.length1), rng.uniform(0, grid.length2))
        ok = True
        for other in centers:
            d1 = (c[0] - other[0] + 0.5 * grid.length1) % grid.length1 - 0.5 * grid.length1
            d2 = (c[1] - other[1] + 0.5 * grid.length2) % grid.length2 - 0.5 * grid.length2
            if np.hypot(d1, d2) < 2 * radius + gap:
                ok = False
                break
        if ok and exclude is not None and np.any(disk_mask(grid, [c], radius + gap) & exclude):
            ok = False
        if ok:
            centers.append(c)
    return centers


def drag_field(grid: LayerGrid, eta_tilde: float, obstacles: np.ndarray | None = None) -> np.ndarray:
    """Uniform dimensionless drag with ``inf`` on obstacle pixels."""
    if not eta_tilde > 0:
        raise ValueError("drag must be positive")
    eta = np.full(grid.shape, float(eta_tilde))
    if obstacles is not None:
        eta[obstacles] = np.inf
    return eta


def polygon_loop(grid: LayerGrid, vertices, width: float = 10.0, amplitude: float = 1e-2) -> np.ndarray:
    """Convex polygonal loop; the ramp is centered on the polygon edges.

    The profile is a function of ``max_i n_i . (x - v_i)`` (outward edge
    normals), so its level sets are polygons with sharp corners.
    """
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
        raise ValueError("a polygon needs at least three (x, y) vertices")
    area2 = np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
    if area2 == 0:
        raise ValueError("degenerate polygon")
    if area2 < 0:
        v = v[::-1]
    edges = np.roll(v, -1, axis=0) - v
    cross = edges[:, 0] * np.roll(edges, -1, axis=0)[:, 1] - edges[:, 1] * np.roll(edges, -1, axis=0)[:, 0]
    if np.any(cross <= 0):
        raise ValueError("polygon must be convex without repeated or collinear vertices")
    lo, hi = v.min(axis=0) - 0.5 * width, v.max(axis=0) + 0.5 * width
    if lo[0] < 0 or lo[1] < 0 or hi[0] > grid.length1 or hi[1] > grid.length2:
        raise ValueError("loop geometry exceeds the layer cell")
    normals = np.stack([edges[:, 1], -edges[:, 0]], axis=1)
    normals /= np.linalg.norm(normals, axis=1)[:, None]
    x, y = grid.mesh()
    d = np.full(grid.shape, -np.inf)
    for (vx, vy), (nx, ny) in zip(v, normals):
        d = np.maximum(d, nx * (x - vx) + ny * (y - vy))
    return _ramp_profile(d, 0.0, width, amplitude)


MICROSTRUCTURE_KINDS = ("circular-loop", "polygonal-loop", "half-square-waves-1D",
                        "random-noisy", "random-smoothed")


@dataclass(frozen=True)
class MicrostructureSpec:
    """Initial ``phi``. ``amplitude`` is the dimensionless density: the ramp
    slope for loops and waves, the target ``max ||alpha||`` for random kinds.
    Without ``vertices`` a polygonal loop is the square of ``half_side``.
    """

    kind: str
    amplitude: float = 1e-2
    radius: float = 50.0
    half_side: float = 60.0
    vertices: tuple | None = None
    width: float = 10.0
    left: tuple[float, float] = (46.0, 56.0)
    right: tuple[float, float] = (264.0, 274.0)
    wavelength: float = 40.0
    center: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in MICROSTRUCTURE_KINDS:
            raise ValueError(f"unknown microstructure {self.kind!r}; expected one of {MICROSTRUCTURE_KINDS}")
        if not (np.isfinite(self.amplitude) and self.amplitude > 0):
            raise ValueError("amplitude must be finite and > 0")


def make_microstructure(spec: MicrostructureSpec, grid: LayerGrid,
                        rng: np.random.Generator | None = None) -> np.ndarray:
    """Initial ``phi`` on ``grid`` (shape ``(n1, n2)``; ``n2 == 1`` for 1D)."""
    if spec.kind == "half-square-waves-1D":
        if grid.n2 != 1:
            raise ValueError("half-square waves need a 1D grid (n2 == 1)")
        return half_square_waves(grid.n1, grid.length1, spec.left, spec.right, spec.amplitude)[:, None]
    if grid.n2 < 2:
        raise ValueError(f"{spec.kind} needs a 2D grid")
    if spec.kind == "circular-loop":
        return circular_loop(grid, spec.radius, spec.width, spec.amplitude, spec.center)
    if spec.kind == "polygonal-loop":
        if spec.vertices is None:
            return square_loop(grid, spec.half_side, spec.width, spec.amplitude, spec.center)
        return polygon_loop(grid, spec.vertices, spec.width, spec.amplitude)
    if rng is None:
        raise ValueError("random microstructures need a random generator")
    if spec.kind == "random-noisy":
        return random_noisy(grid, spec.amplitude, rng)
    return random_smoothed(grid, spec.amplitude, rng, spec.wavelength)
