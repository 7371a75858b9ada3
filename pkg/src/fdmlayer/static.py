"""FFT Green-operator solution of the periodic static problem.

Given a plastic distortion ``Up`` (or a Nye tensor ``alpha``) and a
macroscopic load, find ``grad u``, the strain, the stress
``sigma = C : (grad u - Up)`` and the elastic distortion with
``div sigma = 0`` on the periodic cell.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .elasticity import ElasticModuli, mandel_to_sym, sym, sym_to_mandel
from .grid import GridSpec, check_finite, irfftn, rfftn


class ConvergenceError(RuntimeError):
    """The heterogeneous fixed-point iteration did not converge."""

    def __init__(self, message: str, residuals: list[float]):
        super().__init__(message)
        self.residuals = residuals


def green_tensor(C0: ElasticModuli, xi: np.ndarray) -> np.ndarray:
    """Fully symmetrized ``Gamma0_hat(xi)`` at a single nonzero frequency.

    ``Gamma_ijkl = sym_(ij),(kl) [xi_i N_jk xi_l]`` with ``N`` the inverse
    of the acoustic tensor ``xi . C0 . xi``.
    """
    xi = np.asarray(xi, dtype=float)
    if not np.any(xi):
        return np.zeros((3, 3, 3, 3))
    K = C0.acoustic(xi)
    N = np.linalg.inv(K)
    g = np.einsum("i,jk,l->ijkl", xi, N, xi)
    # minor symmetrization on (ij) and (kl); major symmetry follows from N = N^T
    g = 0.5 * (g + g.transpose(1, 0, 2, 3))
    g = 0.5 * (g + g.transpose(0, 1, 3, 2))
    return g


class GreenOperator:
    """Green operator of a uniform reference medium on a periodic grid.

    Only the inverse acoustic tensor ``N(xi)`` is cached (9 reals per
    frequency); ``Gamma0_hat`` is applied through ``N`` instead of being
    stored as a rank-4 array.
    """

    def __init__(self, C0: ElasticModuli, grid: GridSpec):
        if not C0.is_uniform:
            raise ValueError("reference moduli must be uniform")
        self.C0 = C0
        self.grid = grid
        x1, x2, x3 = grid.wavevectors()
        shape = grid.spectral_shape()
        xi = np.zeros(shape + (3,))
        xi[..., 0] = x1
        xi[..., 1] = x2
        xi[..., 2] = x3
        self.xi = xi
        n2 = np.einsum("...i,...i->...", xi, xi)
        self.nonzero = n2 > 0
        K = C0.acoustic(xi)
        K[~self.nonzero] = np.eye(3)
        det = np.linalg.det(K)
        if np.any(det <= 0):
            raise ValueError("singular acoustic tensor: reference moduli are not positive definite")
        N = np.linalg.inv(K)
        N[~self.nonzero] = 0.0
        self.N = N
        self.xi_norm2 = n2

    def displacement_gradient(self, tau_hat: np.ndarray) -> np.ndarray:
        """Fluctuating ``grad u_hat`` solving ``div(C0 : grad u + tau) = 0``.

        ``grad u_hat = -(N . tau_hat . xi) (x) xi``; zero at ``xi = 0``.
        """
        txi = np.einsum("...ij,...j->...i", tau_hat, self.xi)
        w = np.einsum("...ik,...k->...i", self.N, txi)
        return -w[..., :, None] * self.xi[..., None, :]

    def strain(self, tau_hat: np.ndarray) -> np.ndarray:
        """``-Gamma0_hat : tau_hat`` (for symmetric ``tau_hat``)."""
        return sym(self.displacement_gradient(tau_hat))

    def tensor_at(self, index: tuple[int, int, int]) -> np.ndarray:
        """Rank-4 ``Gamma0_hat`` at one spectral index (tests and diagnostics)."""
        return green_tensor(self.C0, self.xi[index])


def build_green(C0: ElasticModuli, grid: GridSpec) -> GreenOperator:
    return GreenOperator(C0, grid)


@dataclass(frozen=True, eq=False)
class MacroLoad:
    """Macroscopic load: prescribed mean strain on some components and mean
    stress on the others (``stress_mask`` marks stress-controlled entries).
    """

    strain: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    stress: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    stress_mask: np.ndarray = field(default_factory=lambda: np.zeros((3, 3), bool))

    def __post_init__(self):
        for name in ("strain", "stress"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (3, 3) or not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must be a finite 3x3 tensor")
            if np.abs(v - v.T).max() > 1e-14 * max(1.0, np.abs(v).max()):
                raise ValueError(f"{name} must be symmetric")
            object.__setattr__(self, name, v)
        m = np.asarray(self.stress_mask, dtype=bool)
        if m.shape != (3, 3) or np.any(m != m.T):
            raise ValueError("stress_mask must be a symmetric 3x3 boolean array")
        object.__setattr__(self, "stress_mask", m)

    @classmethod
    def strain_control(cls, strain=None) -> "MacroLoad":
        return cls(strain=np.zeros((3, 3)) if strain is None else strain)

    @classmethod
    def stress_control(cls, stress=None) -> "MacroLoad":
        return cls(stress=np.zeros((3, 3)) if stress is None else stress, stress_mask=np.ones((3, 3), bool))

    @classmethod
    def mixed(cls, strain, stress, stress_mask) -> "MacroLoad":
        return cls(strain=strain, stress=stress, stress_mask=stress_mask)

    @property
    def mode(self) -> str:
        if not self.stress_mask.any():
            return "strain"
        if self.stress_mask.all():
            return "stress"
        return "mixed"

    def _mask6(self) -> np.ndarray:
        return sym_to_mandel(self.stress_mask.astype(float)) != 0


@dataclass(eq=False)
class StaticSolution:
    strain: np.ndarray
    stress: np.ndarray
    elastic_distortion: np.ndarray
    displacement_gradient: np.ndarray
    macro_strain: np.ndarray
    residuals: list[float]
    iterations: int
    converged: bool = True

    @property
    def mean_stress(self) -> np.ndarray:
        return self.stress.mean(axis=(0, 1, 2))

    @property
    def mean_strain(self) -> np.ndarray:
        return self.strain.mean(axis=(0, 1, 2))


def _hermitian_weights(grid: GridSpec) -> np.ndarray:
    """Multiplicity of each rfftn bin in the full spectrum."""
    n3 = grid.dims[2]
    w = np.full(grid.dims[2] // 2 + 1, 2.0)
    w[0] = 1.0
    if n3 % 2 == 0:
        w[-1] = 1.0
    return w[None, None, :]


def spectral_norm(a_hat: np.ndarray, grid: GridSpec) -> float:
    """Euclidean norm over the full spectrum of a tensor field given by its rfftn."""
    w = _hermitian_weights(grid)
    peak = float(np.abs(a_hat).max())
    if peak == 0.0 or not np.isfinite(peak):
        return peak
    return peak * float(np.sqrt(np.sum(w * np.sum(np.abs(a_hat / peak) ** 2, axis=(-2, -1)))))


def equilibrium_residual(sigma_hat: np.ndarray, green: GreenOperator, floor: float = 0.0) -> float:
    """``||xi_unit . sigma_hat|| / max(||sigma_hat||, floor)`` over the spectrum.

    ``floor`` keeps the ratio meaningful when the exact stress vanishes and
    only round-off is left; 0 if both are zero.
    """
    w = _hermitian_weights(green.grid)
    peak = float(np.abs(sigma_hat).max())
    if peak == 0.0:
        return 0.0
    if not np.isfinite(peak):
        return float("inf")
    sigma_hat = sigma_hat / peak  # guards the sums of squares against overflow
    total = float(np.sum(w * np.sum(np.abs(sigma_hat) ** 2, axis=(-2, -1))))
    total = max(total, (floor / peak) ** 2)
    norm = np.sqrt(np.where(green.nonzero, green.xi_norm2, 1.0))
    unit = green.xi / norm[..., None]
    div = np.einsum("...ij,...j->...i", sigma_hat, unit)
    div[~green.nonzero] = 0.0
    return float(np.sqrt(np.sum(w * np.sum(np.abs(div) ** 2, axis=-1)) / total))


def _stress_rfft(sigma: np.ndarray) -> np.ndarray:
    """rfftn of a symmetric tensor field, transforming only the 6 distinct entries."""
    out = np.empty(sigma.shape[:3][:2] + (sigma.shape[2] // 2 + 1, 3, 3), dtype=complex)
    for i in range(3):
        for j in range(i, 3):
            out[..., i, j] = rfftn(sigma[..., i, j])
            if j != i:
                out[..., j, i] = out[..., i, j]
    return out


def macro_strain(C0: ElasticModuli, load: MacroLoad, mean_up: np.ndarray) -> np.ndarray:
    """Mean strain ``E`` such that a body of moduli ``C0`` meets ``load``.

    Exact for a homogeneous body, where ``<sigma> = C0 : (E - sym<Up>)``.
    """
    c = C0.mandel()
    m = load._mask6()
    p = sym_to_mandel(sym(mean_up))
    e = sym_to_mandel(load.strain) - p
    if m.any():
        s_bar = sym_to_mandel(load.stress)
        rhs = s_bar[m] - c[np.ix_(m, ~m)] @ e[~m]
        e[m] = np.linalg.solve(c[np.ix_(m, m)], rhs)
    return mandel_to_sym(p + e)


def _check_up(up: np.ndarray, grid: GridSpec) -> None:
    if up.shape != grid.shape + (3, 3):
        raise ValueError(f"Up must have shape {grid.shape + (3, 3)}, got {up.shape}")
    check_finite(up, "plastic distortion")


def solve_homogeneous(up: np.ndarray, C0: ElasticModuli, load: MacroLoad, grid: GridSpec,
                      green: GreenOperator | None = None) -> StaticSolution:
    """Stress and elastic distortion for uniform moduli: one FFT round trip."""
    _check_up(up, grid)
    if green is None:
        green = build_green(C0, grid)
    tau = -C0.apply(up)
    tau_hat = _stress_rfft(tau)
    grad_u = np.empty(grid.shape + (3, 3))
    gh = green.displacement_gradient(tau_hat)
    for i in range(3):
        for j in range(3):
            grad_u[..., i, j] = irfftn(gh[..., i, j], grid.shape)
    E = macro_strain(C0, load, up.mean(axis=(0, 1, 2)))
    grad_u += E
    ue = grad_u - up
    sigma = C0.apply(ue)
    res = equilibrium_residual(_stress_rfft(sigma), green)
    return StaticSolution(strain=sym(grad_u), stress=sigma, elastic_distortion=ue,
                          displacement_gradient=grad_u, macro_strain=E,
                          residuals=[res], iterations=1)


def solve_heterogeneous(up: np.ndarray, C: ElasticModuli, load: MacroLoad, grid: GridSpec,
                        C0: ElasticModuli | None = None, tol: float = 1e-8,
                        max_iter: int = 1000) -> StaticSolution:
    """Basic fixed-point scheme, i.e. partial sums of the Neumann series in
    ``-Gamma0 * dC`` applied to ``<eps> + Gamma0 * (C : Up)``.

    Iterates ``grad u <- grad u - Gamma0 * sigma`` (the operator below returns
    ``-Gamma0 * sigma``) until the relative
    equilibrium residual drops below ``tol`` (and, for stress-controlled
    entries, the mean stress matches to ``1e-12`` relative).
    """
    _check_up(up, grid)
    if C0 is None:
        C0 = C.mean()
    green = build_green(C0, grid)
    c0 = C0.mandel()
    m = load._mask6()
    s_bar = sym_to_mandel(load.stress)

    E = macro_strain(C0, load, up.mean(axis=(0, 1, 2)))
    # first partial sum of the series: <eps> + Gamma0 * (C : Up)
    grad_u = np.empty(grid.shape + (3, 3))
    gh = green.displacement_gradient(_stress_rfft(-C.apply(up)))
    for i in range(3):
        for j in range(3):
            grad_u[..., i, j] = irfftn(gh[..., i, j], grid.shape)
    grad_u += E
    # stress scale of the sources, used as the residual floor
    source = C.apply(sym(up) - E)
    floor = spectral_norm(_stress_rfft(source), grid)
    source_rms = float(np.sqrt(np.mean(np.sum(source ** 2, axis=(-2, -1)))))
    residuals: list[float] = []
    it = 1
    first_norm = None
    while True:
        sigma = C.apply(grad_u - up)
        norm = float(np.abs(sigma).max())
        if first_norm is None:
            first_norm = norm
        if not np.isfinite(norm) or norm > 1e12 * max(first_norm, 1e-300):
            raise ConvergenceError(
                f"iteration diverged after {it} iterations; "
                "try a stiffer reference medium, e.g. (C_min + C_max) / 2",
                residuals)
        sigma_hat = _stress_rfft(sigma)
        res = equilibrium_residual(sigma_hat, green, floor)
        residuals.append(res)
        mean_err = 0.0
        if m.any():
            s_mean = sym_to_mandel(sigma.mean(axis=(0, 1, 2)))
            scale = max(np.abs(s_bar).max(), np.sqrt(np.mean(np.sum(sigma ** 2, axis=(-2, -1)))),
                        1e-2 * source_rms, 1e-300)
            mean_err = float(np.abs(s_mean[m] - s_bar[m]).max() / scale)
        if res < tol and mean_err < 1e-12:
            break
        if it >= max_iter:
            raise ConvergenceError(
                f"no convergence after {max_iter} iterations (residual {res:.3e}); "
                "try a stiffer reference medium, e.g. (C_min + C_max) / 2",
                residuals)
        it += 1
        gh = green.displacement_gradient(sigma_hat)
        for i in range(3):
            for j in range(3):
                grad_u[..., i, j] += irfftn(gh[..., i, j], grid.shape)
        if m.any():
            # C0-based correction of the stress-controlled mean strain entries
            de = np.zeros(6)
            de[m] = np.linalg.solve(c0[np.ix_(m, m)], s_bar[m] - s_mean[m])
            dE = mandel_to_sym(de)
            grad_u += dE
            E = E + dE
    ue = grad_u - up
    return StaticSolution(strain=sym(grad_u), stress=sigma, elastic_distortion=ue,
                          displacement_gradient=grad_u, macro_strain=E,
                          residuals=residuals, iterations=it)


def incompatible_up_from_alpha(alpha: np.ndarray, grid: GridSpec, mean: np.ndarray | None = None,
                               div_tol: float = 1e-8, strict: bool = True) -> np.ndarray:
    """Gradient-free plastic distortion with ``-curl Up = alpha``.

    ``Up_hat = i (alpha_hat x xi) / |xi|^2`` (row-wise cross product) for
    ``xi != 0``; the mean is ``mean`` (zero by default). A non-solenoidal
    ``alpha`` raises (``strict``) or warns.
    """
    if alpha.shape != grid.shape + (3, 3):
        raise ValueError(f"alpha must have shape {grid.shape + (3, 3)}")
    check_finite(alpha, "alpha")
    ah = rfftn(alpha)
    x1, x2, x3 = grid.wavevectors()
    xi = [np.broadcast_to(x, ah.shape[:3]) for x in (x1, x2, x3)]
    n2 = xi[0] ** 2 + xi[1] ** 2 + xi[2] ** 2
    scale = np.sqrt(np.sum(np.abs(ah) ** 2))
    if scale > 0:
        norm = np.sqrt(np.where(n2 > 0, n2, 1.0))
        div = sum(ah[..., :, k] * (xi[k] / norm)[..., None] for k in range(3))
        rel = float(np.sqrt(np.sum(np.abs(div) ** 2)) / scale)
        if rel > div_tol:
            msg = f"alpha is not divergence-free (relative residual {rel:.2e})"
            if strict:
                raise ValueError(msg)
            warnings.warn(msg, stacklevel=2)
    inv = np.where(n2 > 0, 1.0 / np.where(n2 > 0, n2, 1.0), 0.0)[..., None, None]
    uh = np.empty_like(ah)
    # (alpha x xi)_ij = e_jkl alpha_ik xi_l
    uh[..., :, 0] = ah[..., :, 1] * xi[2][..., None] - ah[..., :, 2] * xi[1][..., None]
    uh[..., :, 1] = ah[..., :, 2] * xi[0][..., None] - ah[..., :, 0] * xi[2][..., None]
    uh[..., :, 2] = ah[..., :, 0] * xi[1][..., None] - ah[..., :, 1] * xi[0][..., None]
    uh *= 1j * inv
    up = irfftn(uh, grid.shape)
    if mean is not None:
        up += np.asarray(mean, dtype=float)
    return up
