"""Periodic grids and spectral differential operators.

Tensor fields are plain numpy arrays of shape ``(n1, n2, n3, 3, 3)``
(C order, tensor components innermost); scalar fields are ``(n1, n2, n3)``.
A 2D grid is a 3D grid with ``n3 == 1``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

# number of FFT workers; set once by the CLI (--threads)
_WORKERS = 1


def set_workers(n: int) -> None:
    global _WORKERS
    if n < 1:
        raise ValueError("thread count must be >= 1")
    _WORKERS = int(n)


def rfftn(a: np.ndarray) -> np.ndarray:
    """Forward real FFT over the three spatial axes (leading axes)."""
    return sfft.rfftn(a, axes=(0, 1, 2), workers=_WORKERS)


def irfftn(a: np.ndarray, shape: tuple[int, int, int]) -> np.ndarray:
    return sfft.irfftn(a, s=shape, axes=(0, 1, 2), workers=_WORKERS)


@dataclass(frozen=True)
class GridSpec:
    """Periodic box of ``dims`` points spanning ``cell_size`` (units of b)."""

    dims: tuple[int, int, int]
    cell_size: tuple[float, float, float]

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        size = tuple(float(L) for L in self.cell_size)
        if len(dims) != 3 or len(size) != 3:
            raise ValueError("dims and cell_size need three entries")
        if min(dims) < 1:
            raise ValueError(f"grid dims must be >= 1, got {dims}")
        if not all(np.isfinite(size)) or min(size) <= 0:
            raise ValueError(f"cell sizes must be positive, got {size}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "cell_size", size)

    @classmethod
    def cube(cls, n: int, length: float) -> "GridSpec":
        return cls((n, n, n), (length, length, length))

    @classmethod
    def plane(cls, n1: int, n2: int, length1: float, length2: float | None = None) -> "GridSpec":
        length2 = length1 if length2 is None else length2
        # out-of-plane spacing is irrelevant for x3-independent fields
        return cls((n1, n2, 1), (length1, length2, 1.0))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.dims

    @property
    def spacing(self) -> tuple[float, float, float]:
        return tuple(L / n for L, n in zip(self.cell_size, self.dims))

    @property
    def npoints(self) -> int:
        return int(np.prod(self.dims))

    def coordinates(self) -> list[np.ndarray]:
        """Node coordinates ``x_j = j * dx`` along each axis."""
        return [np.arange(n) * d for n, d in zip(self.dims, self.spacing)]

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(np.meshgrid(*self.coordinates(), indexing="ij"))

    def wavevectors(self) -> list[np.ndarray]:
        """Angular frequencies 2*pi*k/L for the rfftn layout, broadcastable.

        The Nyquist component of each axis is set to zero. For real fields
        this is what differentiating with the signed Nyquist frequency and
        keeping the real part amounts to, and it keeps every spectral
        operator (curl, div, Green operator) on one consistent footing.
        """
        out = []
        for axis, (n, L) in enumerate(zip(self.dims, self.cell_size)):
            if axis == 2:
                k = sfft.rfftfreq(n, d=1.0 / n)
            else:
                k = sfft.fftfreq(n, d=1.0 / n)
            xi = 2.0 * np.pi * k / L
            if n % 2 == 0:
                xi[np.abs(k) == n // 2] = 0.0
            shape = [1, 1, 1]
            shape[axis] = xi.size
            out.append(xi.reshape(shape))
        return out

    def spectral_shape(self) -> tuple[int, int, int]:
        n1, n2, n3 = self.dims
        return (n1, n2, n3 // 2 + 1)


def check_finite(a: np.ndarray, what: str = "field") -> None:
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{what} contains non-finite values")


def _check_tensor(f: np.ndarray, grid: GridSpec) -> None:
    if f.shape != grid.shape + (3, 3):
        raise ValueError(f"expected tensor field of shape {grid.shape + (3, 3)}, got {f.shape}")
    check_finite(f, "tensor field")


def spectral_curl(f: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Row-wise curl, ``(curl f)_ij = e_jkl d_k f_il``.

    With this convention ``alpha = -spectral_curl(Up)`` gives, for
    ``Up = phi e1 (x) e3``, ``alpha_11 = -phi_,2`` and ``alpha_12 = phi_,1``.
    """
    _check_tensor(f, grid)
    fh = rfftn(f)
    x1, x2, x3 = grid.wavevectors()
    d = [1j * x1[..., None], 1j * x2[..., None], 1j * x3[..., None]]
    ch = np.empty_like(fh)
    # d[k] multiplies every row i at once
    ch[..., :, 0] = d[1] * fh[..., :, 2] - d[2] * fh[..., :, 1]
    ch[..., :, 1] = d[2] * fh[..., :, 0] - d[0] * fh[..., :, 2]
    ch[..., :, 2] = d[0] * fh[..., :, 1] - d[1] * fh[..., :, 0]
    return irfftn(ch, grid.shape)


def spectral_div(f: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Divergence on the second index, ``(div f)_i = d_j f_ij``; returns ``(..., 3)``."""
    _check_tensor(f, grid)
    fh = rfftn(f)
    x1, x2, x3 = grid.wavevectors()
    dh = 1j * (x1[..., None] * fh[..., :, 0] + x2[..., None] * fh[..., :, 1] + x3[..., None] * fh[..., :, 2])
    return irfftn(dh, grid.shape)


def spectral_grad(v: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Gradient of a scalar ``(n1,n2,n3)`` or vector ``(n1,n2,n3,3)`` field.

    Returns ``(..., 3)`` or ``(..., 3, 3)`` with ``(grad v)_ij = d_j v_i``.
    """
    check_finite(v)
    vh = rfftn(v)
    xi = grid.wavevectors()
    if v.ndim == 3:
        return np.stack([irfftn(1j * x * vh, grid.shape) for x in xi], axis=-1)
    return np.stack([irfftn(1j * x[..., None] * vh, grid.shape) for x in xi], axis=-1)


def volume_average(f: np.ndarray) -> np.ndarray | float:
    """Arithmetic mean over the three spatial axes (fixed summation order)."""
    f = np.asarray(f)
    mean = f.mean(axis=(0, 1, 2))
    return float(mean) if np.ndim(mean) == 0 else mean
