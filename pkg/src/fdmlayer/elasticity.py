"""Elastic stiffness tensors, uniform or per grid point."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_I3 = np.eye(3)
# Mandel ordering for symmetric second-order tensors
_MANDEL = [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)]
_MW = np.array([1.0, 1.0, 1.0, np.sqrt(2.0), np.sqrt(2.0), np.sqrt(2.0)])


def isotropic_tensor(lam: float, mu: float) -> np.ndarray:
    d = _I3
    return (lam * np.einsum("ij,kl->ijkl", d, d)
            + mu * (np.einsum("ik,jl->ijkl", d, d) + np.einsum("il,jk->ijkl", d, d)))


def to_mandel(C: np.ndarray) -> np.ndarray:
    """``(..., 3,3,3,3)`` stiffness -> ``(..., 6, 6)`` Mandel matrix."""
    M = np.empty(C.shape[:-4] + (6, 6))
    for a, (i, j) in enumerate(_MANDEL):
        for b, (k, l) in enumerate(_MANDEL):
            M[..., a, b] = C[..., i, j, k, l] * _MW[a] * _MW[b]
    return M


def sym_to_mandel(A: np.ndarray) -> np.ndarray:
    return np.stack([A[..., i, j] * w for (i, j), w in zip(_MANDEL, _MW)], axis=-1)


def mandel_to_sym(v: np.ndarray) -> np.ndarray:
    A = np.empty(v.shape[:-1] + (3, 3))
    for a, (i, j) in enumerate(_MANDEL):
        A[..., i, j] = A[..., j, i] = v[..., a] / _MW[a]
    return A


def sym(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + np.swapaxes(A, -1, -2))


@dataclass(frozen=True, eq=False)
class ElasticModuli:
    """Stiffness, either isotropic (``lam``, ``mu`` scalars or grid arrays)
    or a full rank-4 tensor ``C`` of shape ``(3,3,3,3)`` or ``grid + (3,3,3,3)``.
    """

    lam: np.ndarray | float | None = None
    mu: np.ndarray | float | None = None
    C: np.ndarray | None = None

    def __post_init__(self):
        if self.C is None:
            if self.lam is None or self.mu is None:
                raise ValueError("give either (lam, mu) or C")
            lam = np.asarray(self.lam, dtype=float)
            mu = np.asarray(self.mu, dtype=float)
            if lam.shape != mu.shape:
                raise ValueError("lam and mu must have the same shape")
            if not (np.all(mu > 0) and np.all(lam + 2.0 * mu / 3.0 > 0)):
                raise ValueError("isotropic moduli must satisfy mu > 0 and lam + 2 mu / 3 > 0")
            object.__setattr__(self, "lam", lam)
            object.__setattr__(self, "mu", mu)
        else:
            C = np.asarray(self.C, dtype=float)
            if C.shape[-4:] != (3, 3, 3, 3):
                raise ValueError("C must end with (3,3,3,3)")
            sym_err = max(np.abs(C - C.transpose(*range(C.ndim - 4), -3, -4, -2, -1)).max(),
                          np.abs(C - C.transpose(*range(C.ndim - 4), -4, -3, -1, -2)).max(),
                          np.abs(C - C.transpose(*range(C.ndim - 4), -2, -1, -4, -3)).max())
            if sym_err > 1e-12 * np.abs(C).max():
                raise ValueError("C lacks minor/major symmetry")
            if np.linalg.eigvalsh(to_mandel(C)).min() <= 0:
                raise ValueError("C is not positive definite")
            object.__setattr__(self, "C", C)

    @classmethod
    def isotropic(cls, lam, mu) -> "ElasticModuli":
        return cls(lam=lam, mu=mu)

    @property
    def is_isotropic(self) -> bool:
        return self.C is None

    @property
    def is_uniform(self) -> bool:
        if self.is_isotropic:
            return self.mu.ndim == 0
        return self.C.ndim == 4

    def tensor(self) -> np.ndarray:
        """Full ``(..., 3,3,3,3)`` stiffness."""
        if not self.is_isotropic:
            return self.C
        lam = self.lam[..., None, None, None, None]
        mu = self.mu[..., None, None, None, None]
        d = _I3
        return (lam * np.einsum("ij,kl->ijkl", d, d)
                + mu * (np.einsum("ik,jl->ijkl", d, d) + np.einsum("il,jk->ijkl", d, d)))

    def mean(self) -> "ElasticModuli":
        """Uniform moduli equal to the arithmetic volume average."""
        if self.is_uniform:
            return self
        if self.is_isotropic:
            return ElasticModuli(lam=float(self.lam.mean()), mu=float(self.mu.mean()))
        return ElasticModuli(C=self.C.mean(axis=(0, 1, 2)))

    def apply(self, A: np.ndarray) -> np.ndarray:
        """``C : A`` for a (possibly non-symmetric) second-order field ``A``."""
        if self.is_isotropic:
            lam, mu = self.lam, self.mu
            if lam.ndim:
                lam = lam[..., None, None]
                mu = mu[..., None, None]
            tr = np.trace(A, axis1=-2, axis2=-1)[..., None, None]
            return lam * tr * _I3 + mu * (A + np.swapaxes(A, -1, -2))
        return np.einsum("...ijkl,...kl->...ij", self.C, A)

    def mandel(self) -> np.ndarray:
        return to_mandel(self.tensor())

    def acoustic(self, xi: np.ndarray) -> np.ndarray:
        """Acoustic tensor ``K_ik = C_ijkl xi_j xi_l`` for uniform moduli, ``xi`` of shape ``(..., 3)``."""
        if not self.is_uniform:
            raise ValueError("acoustic tensor needs uniform moduli")
        if self.is_isotropic:
            lam, mu = float(self.lam), float(self.mu)
            xx = np.einsum("...i,...k->...ik", xi, xi)
            n2 = np.einsum("...i,...i->...", xi, xi)[..., None, None]
            return mu * n2 * _I3 + (lam + mu) * xx
        return np.einsum("ijkl,...j,...l->...ik", self.C, xi, xi)
