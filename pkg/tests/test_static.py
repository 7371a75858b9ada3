import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fdmlayer.elasticity import ElasticModuli, sym
from fdmlayer.grid import GridSpec, spectral_curl
from fdmlayer.static import (ConvergenceError, MacroLoad, build_green, equilibrium_residual,
                             green_tensor, incompatible_up_from_alpha, solve_heterogeneous,
                             solve_homogeneous)
from oracles import derivative_matrix, real_space_strain

LAM, MU = 1.5, 1.0
C0 = ElasticModuli.isotropic(LAM, MU)


def _sym4_errors(g):
    return (np.abs(g - g.transpose(1, 0, 2, 3)).max(),
            np.abs(g - g.transpose(0, 1, 3, 2)).max(),
            np.abs(g - g.transpose(2, 3, 0, 1)).max())


def _two_phase(grid, fraction, contrast, seed=0):
    phase = np.random.default_rng(seed).random(grid.shape) < fraction
    mu = np.where(phase, contrast, 1.0)
    return ElasticModuli.isotropic(2.0 * mu, mu), 2.0 * mu, mu


# -- Green operator ----------------------------------------------------------

def test_green_along_axis_matches_inverse_acoustic_tensor():
    g = green_tensor(C0, np.array([1.0, 0.0, 0.0]))
    assert g[0, 0, 0, 0] == pytest.approx(1.0 / (LAM + 2 * MU), rel=1e-14)
    assert g[0, 1, 0, 1] == pytest.approx(1.0 / (4 * MU), rel=1e-14)
    assert g[1, 1, 1, 1] == 0.0


def test_green_zero_frequency_is_zero():
    assert not np.any(green_tensor(C0, np.zeros(3)))


@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 1e-3))
def test_green_even_and_symmetric(xi):
    xi = np.array(xi)
    g = green_tensor(C0, xi)
    assert np.allclose(g, green_tensor(C0, -xi), rtol=0, atol=1e-15)
    assert max(_sym4_errors(g)) < 1e-14 * np.abs(g).max()


def test_green_operator_matches_pointwise_tensor():
    grid = GridSpec((4, 5, 6), (4.0, 5.0, 7.0))
    green = build_green(C0, grid)
    rng = np.random.default_rng(1)
    tau = sym(rng.normal(size=(3, 3)))
    for idx in [(1, 0, 0), (3, 2, 1), (0, 4, 3)]:
        tau_hat = np.zeros(grid.spectral_shape() + (3, 3), complex)
        tau_hat[idx] = tau
        expected = -np.einsum("ijkl,kl->ij", green.tensor_at(idx), tau)
        assert np.allclose(green.strain(tau_hat)[idx], expected, atol=1e-14)


def test_green_needs_uniform_moduli():
    grid = GridSpec.cube(4, 4.0)
    C, _, _ = _two_phase(grid, 0.5, 2.0)
    with pytest.raises(ValueError):
        build_green(C, grid)


# -- homogeneous solve -------------------------------------------------------

def test_no_plastic_distortion_gives_uniform_stress():
    grid = GridSpec.cube(6, 6.0)
    E = sym(np.random.default_rng(2).normal(size=(3, 3)))
    sol = solve_homogeneous(np.zeros(grid.shape + (3, 3)), C0, MacroLoad.strain_control(E), grid)
    assert np.allclose(sol.stress, C0.apply(E), atol=1e-14)


def test_uniform_plastic_distortion_relaxes_under_zero_stress():
    grid = GridSpec.cube(5, 5.0)
    up = np.broadcast_to(np.random.default_rng(3).normal(size=(3, 3)), grid.shape + (3, 3)).copy()
    sol = solve_homogeneous(up, C0, MacroLoad.stress_control(), grid)
    assert np.abs(sol.stress).max() < 1e-13


@pytest.mark.parametrize("a,b", [(1, 0), (0, 1), (1, 1), (2, 3)])
def test_single_mode_closed_form(a, b):
    n, L, A = 12, 12.0, 0.3
    grid = GridSpec.cube(n, L)
    x1, x2, _ = grid.mesh()
    k1, k2 = 2 * np.pi * a / L, 2 * np.pi * b / L
    f = np.sin(k1 * x1 + k2 * x2)
    up = np.zeros(grid.shape + (3, 3))
    up[..., 0, 2] = A * f
    sol = solve_homogeneous(up, C0, MacroLoad.stress_control(), grid)
    s = np.zeros_like(sol.stress)
    # out-of-plane shear carried by the plane normal to the wave vector
    s[..., 0, 2] = s[..., 2, 0] = -MU * A * f * k2 ** 2 / (k1 ** 2 + k2 ** 2)
    s[..., 1, 2] = s[..., 2, 1] = MU * A * f * k1 * k2 / (k1 ** 2 + k2 ** 2)
    assert np.abs(sol.stress - s).max() < 1e-13
    if b:
        assert sol.residuals[0] < 1e-13


def test_homogeneous_solve_is_linear():
    grid = GridSpec((6, 5, 4), (6.0, 5.0, 4.0))
    rng = np.random.default_rng(4)
    u1, u2 = rng.normal(size=(2,) + grid.shape + (3, 3))
    load = MacroLoad.stress_control()
    s1 = solve_homogeneous(u1, C0, load, grid).stress
    s2 = solve_homogeneous(u2, C0, load, grid).stress
    s12 = solve_homogeneous(2.0 * u1 - 3.0 * u2, C0, load, grid).stress
    assert np.abs(s12 - (2.0 * s1 - 3.0 * s2)).max() < 1e-12 * np.abs(s12).max()


def test_strain_is_compatible_and_loads_are_met():
    grid = GridSpec.cube(8, 8.0)
    rng = np.random.default_rng(5)
    up = rng.normal(size=grid.shape + (3, 3))
    sig_bar = sym(rng.normal(size=(3, 3)))
    sol = solve_homogeneous(up, C0, MacroLoad.stress_control(sig_bar), grid)
    assert np.abs(sol.mean_stress - sig_bar).max() < 1e-12
    inc = spectral_curl(np.swapaxes(spectral_curl(sol.strain, grid), -1, -2), grid)
    assert np.abs(inc).max() < 1e-10 * np.abs(sol.strain).max()
    E = sym(rng.normal(size=(3, 3)))
    sol = solve_homogeneous(up, C0, MacroLoad.strain_control(E), grid)
    assert np.abs(sol.mean_strain - E).max() < 1e-12


def test_mixed_load():
    grid = GridSpec.cube(6, 6.0)
    up = np.random.default_rng(6).normal(size=grid.shape + (3, 3))
    mask = np.zeros((3, 3), bool)
    mask[0, 2] = mask[2, 0] = True
    E = np.zeros((3, 3))
    E[0, 1] = E[1, 0] = 0.01
    S = np.zeros((3, 3))
    S[0, 2] = S[2, 0] = 0.2
    sol = solve_homogeneous(up, C0, MacroLoad.mixed(E, S, mask), grid)
    assert sol.mean_stress[0, 2] == pytest.approx(0.2, abs=1e-12)
    assert sol.mean_strain[0, 1] == pytest.approx(0.01, abs=1e-12)
    assert MacroLoad.mixed(E, S, mask).mode == "mixed"


def test_macro_load_validation():
    with pytest.raises(ValueError):
        MacroLoad.strain_control(np.arange(9.0).reshape(3, 3))
    with pytest.raises(ValueError):
        MacroLoad.stress_control(np.full((3, 3), np.nan))
    with pytest.raises(ValueError):
        solve_homogeneous(np.zeros((2, 2, 2, 3, 3)), C0, MacroLoad(), GridSpec.cube(3, 3.0))


def test_residual_of_zero_stress_is_zero():
    grid = GridSpec.cube(4, 4.0)
    green = build_green(C0, grid)
    assert equilibrium_residual(np.zeros(grid.spectral_shape() + (3, 3), complex), green) == 0.0


def test_residual_survives_huge_stress():
    grid = GridSpec.cube(4, 4.0)
    green = build_green(C0, grid)
    s = np.zeros(grid.spectral_shape() + (3, 3), complex)
    s[1, 0, 0, 0, 0] = 1e300
    assert equilibrium_residual(s, green) == pytest.approx(1.0)


# -- heterogeneous solve -----------------------------------------------------

def test_uniform_moduli_converge_in_one_iteration():
    grid = GridSpec.cube(6, 6.0)
    up = np.random.default_rng(7).normal(size=grid.shape + (3, 3))
    C = ElasticModuli.isotropic(np.full(grid.shape, LAM), np.full(grid.shape, MU))
    het = solve_heterogeneous(up, C, MacroLoad.stress_control(), grid, tol=1e-12)
    hom = solve_homogeneous(up, C0, MacroLoad.stress_control(), grid)
    assert het.iterations == 1
    assert np.abs(het.stress - hom.stress).max() < 1e-14


def _laminate(n, contrast, u):
    grid = GridSpec((n, 3, 3), (float(n), 3.0, 3.0))
    x1 = np.arange(n)
    phase = np.broadcast_to((x1 < n // 3)[:, None, None], grid.shape)
    mu = np.where(phase, contrast, 1.0)
    up = np.zeros(grid.shape + (3, 3))
    up[..., 0, 2] = np.where(phase, u, 0.0)
    return grid, phase, ElasticModuli.isotropic(1.5 * mu, mu), mu, up


def test_laminate_under_zero_mean_strain():
    grid, phase, C, mu, up = _laminate(15, 3.0, 0.02)
    sol = solve_heterogeneous(up, C, MacroLoad.strain_control(), grid, tol=1e-13, max_iter=2000)
    # traction continuity: sigma13 uniform; zero mean strain fixes its value
    s = -np.mean(up[..., 0, 2] / 2) / np.mean(1.0 / (2.0 * mu))
    expected = np.zeros_like(sol.stress)
    expected[..., 0, 2] = expected[..., 2, 0] = s
    assert np.abs(sol.stress - expected).max() < 1e-8 * abs(s)
    eps13 = s / (2 * mu) + up[..., 0, 2] / 2
    assert np.abs(sol.strain[..., 0, 2] - eps13).max() < 1e-8 * np.abs(eps13).max()


def test_laminate_under_zero_mean_stress_is_stress_free():
    grid, phase, C, mu, up = _laminate(15, 3.0, 0.02)
    sol = solve_heterogeneous(up, C, MacroLoad.stress_control(), grid, tol=1e-13, max_iter=2000)
    assert np.abs(sol.stress).max() < 1e-8 * 0.02
    assert np.abs(sol.mean_stress).max() < 1e-12


@pytest.mark.parametrize("n,method", [(6, "direct"), (8, "direct"), (16, "cg")])
def test_random_two_phase_matches_real_space_solve(n, method):
    grid = GridSpec.cube(n, float(n))
    C, lam, mu = _two_phase(grid, 0.6, 10.0)
    rng = np.random.default_rng(8)
    up = rng.normal(size=grid.shape + (3, 3)) * 1e-2
    E = np.zeros((3, 3))
    E[0, 1] = E[1, 0] = 1e-3
    ref = real_space_strain(up, lam, mu, E, grid.dims, grid.cell_size, method=method)
    sol = solve_heterogeneous(up, C, MacroLoad.strain_control(E), grid, tol=1e-12, max_iter=5000)
    assert np.abs(sol.strain - ref).max() < 1e-6 * np.abs(ref).max()


@pytest.mark.parametrize("contrast", [2.0, 5.0, 10.0])
def test_residual_decreases_monotonically(contrast):
    grid = GridSpec.cube(12, 12.0)
    C, _, _ = _two_phase(grid, 0.6, contrast, seed=9)
    up = np.random.default_rng(9).normal(size=grid.shape + (3, 3))
    sol = solve_heterogeneous(up, C, MacroLoad.stress_control(), grid, tol=1e-10, max_iter=5000)
    r = np.array(sol.residuals)
    assert r[-1] < 1e-10
    assert np.all(np.diff(r) <= 0)
    rms = np.sqrt(np.mean(np.sum(sol.stress ** 2, axis=(-2, -1))))
    assert np.abs(sol.mean_stress).max() < 1e-12 * rms


def test_soft_reference_medium_diverges_with_a_report():
    grid = GridSpec.cube(6, 6.0)
    C, _, _ = _two_phase(grid, 0.2, 10.0)
    up = np.random.default_rng(10).normal(size=grid.shape + (3, 3))
    with pytest.raises(ConvergenceError, match="reference medium") as err:
        solve_heterogeneous(up, C, MacroLoad.strain_control(), grid, max_iter=5000)
    assert err.value.residuals
    # the midpoint of the moduli range restores convergence
    mid = ElasticModuli.isotropic(11.0, 5.5)
    sol = solve_heterogeneous(up, C, MacroLoad.strain_control(), grid, C0=mid, tol=1e-10, max_iter=5000)
    assert sol.residuals[-1] < 1e-10


def test_iteration_cap_raises():
    grid = GridSpec.cube(6, 6.0)
    C, _, _ = _two_phase(grid, 0.6, 10.0)
    up = np.random.default_rng(11).normal(size=grid.shape + (3, 3))
    with pytest.raises(ConvergenceError, match="no convergence"):
        solve_heterogeneous(up, C, MacroLoad.strain_control(), grid, tol=1e-14, max_iter=3)


# -- incompatible plastic distortion ------------------------------------------

def test_zero_alpha_gives_zero_distortion():
    grid = GridSpec.cube(4, 4.0)
    assert not np.any(incompatible_up_from_alpha(np.zeros(grid.shape + (3, 3)), grid))


@pytest.mark.parametrize("dims", [(8, 8, 8), (7, 6, 5)])
def test_curl_round_trip(dims):
    grid = GridSpec(dims, tuple(float(n) for n in dims))
    alpha = -spectral_curl(np.random.default_rng(12).normal(size=grid.shape + (3, 3)), grid)
    mean = np.arange(9.0).reshape(3, 3)
    up = incompatible_up_from_alpha(alpha, grid, mean=mean)
    assert np.abs(-spectral_curl(up, grid) - alpha).max() < 1e-10 * np.abs(alpha).max()
    assert np.allclose(up.mean(axis=(0, 1, 2)), mean, atol=1e-13)


def test_incompatible_part_matches_least_squares_poisson_solve():
    n = 8
    grid = GridSpec.cube(n, float(n))
    x1, x2, x3 = grid.mesh()
    up_in = np.zeros(grid.shape + (3, 3))
    up_in[..., 0, 2] = np.sin(2 * np.pi * x2 / n)
    up_in[..., 1, 0] = np.cos(2 * np.pi * (x1 + 2 * x3) / n)
    alpha = -spectral_curl(up_in, grid)
    up = incompatible_up_from_alpha(alpha, grid)
    # minimum-norm solution of the discrete curl system, row by row
    D = derivative_matrix(n, float(n))
    I = np.eye(n)
    d = [np.kron(np.kron(D, I), I), np.kron(np.kron(I, D), I), np.kron(np.kron(I, I), D)]
    Z = np.zeros_like(d[0])
    curl = np.block([[Z, -d[2], d[1]], [d[2], Z, -d[0]], [-d[1], d[0], Z]])
    for i in range(3):
        rhs = -alpha[..., i, :].reshape(-1, 3).T.ravel()
        sol = np.linalg.lstsq(curl, rhs, rcond=1e-10)[0].reshape(3, -1).T.reshape(grid.shape + (3,))
        assert np.abs(up[..., i, :] - sol).max() < 1e-10


def test_non_solenoidal_alpha():
    grid = GridSpec.cube(6, 6.0)
    alpha = np.random.default_rng(13).normal(size=grid.shape + (3, 3))
    with pytest.raises(ValueError, match="divergence"):
        incompatible_up_from_alpha(alpha, grid)
    with pytest.warns(UserWarning):
        incompatible_up_from_alpha(alpha, grid, strict=False)
