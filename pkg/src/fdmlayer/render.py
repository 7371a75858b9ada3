"""Grayscale rasters of layer fields as binary PGM (P5) images."""
from __future__ import annotations

from pathlib import Path

import numpy as np


def to_gray(field: np.ndarray, scale: float) -> np.ndarray:
    """Linear map ``[0, scale] -> [0, 255]`` with clamping.

    The raster is ``(rows, cols) = (n2, n1)`` with x2 pointing up, so
    ``field[j, k]`` lands in row ``n2 - 1 - k`` and column ``j``.
    """
    if not scale > 0:
        raise ValueError("scale must be > 0")
    f = np.nan_to_num(np.asarray(field, dtype=float), nan=0.0)
    gray = np.rint(np.clip(f / scale, 0.0, 1.0) * 255.0).astype(np.uint8)
    return gray.T[::-1]


def write_pgm(path, gray: np.ndarray) -> Path:
    gray = np.asarray(gray, dtype=np.uint8)
    rows, cols = gray.shape
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_bytes(b"P5\n%d %d\n255\n" % (cols, rows) + gray.tobytes())
    return p


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5" or int(parts[3]) != 255:
        raise ValueError("only 8-bit binary PGM is supported")
    cols, rows = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4], dtype=np.uint8, count=rows * cols).reshape(rows, cols)


def render_alpha_map(density: np.ndarray, scale: float, path=None) -> np.ndarray:
    """``||alpha||`` map as an 8-bit raster (written to ``path`` when given)."""
    gray = to_gray(density, scale)
    if path is not None:
        write_pgm(path, gray)
    return gray
