import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fdmlayer.elasticity import ElasticModuli, isotropic_tensor, mandel_to_sym, sym_to_mandel
from fdmlayer.grid import (GridSpec, check_finite, spectral_curl, spectral_div, spectral_grad,
                           volume_average)
from fdmlayer.units import ALUMINUM, MaterialParams, nondimensionalize, redimensionalize

dims_strategy = st.tuples(st.integers(1, 7), st.integers(1, 7), st.integers(1, 7))


def _random_tensor(grid, seed):
    return np.random.default_rng(seed).normal(size=grid.shape + (3, 3))


def test_grid_validation():
    with pytest.raises(ValueError):
        GridSpec((0, 4, 4), (1, 1, 1))
    with pytest.raises(ValueError):
        GridSpec((4, 4, 4), (1, -1, 1))
    g = GridSpec.plane(8, 4, 16.0)
    assert g.dims == (8, 4, 1)
    assert g.spacing[:2] == (2.0, 4.0)


def test_nyquist_component_is_zeroed():
    g = GridSpec((4, 5, 6), (4.0, 5.0, 6.0))
    x1, x2, x3 = g.wavevectors()
    assert x1.ravel()[2] == 0.0  # k = -2 on an even axis
    assert np.allclose(x2.ravel()[[1, 2]], 2 * np.pi * np.array([1, 2]) / 5.0)
    assert x3.ravel()[-1] == 0.0


def test_curl_of_zero_is_zero():
    g = GridSpec.cube(4, 4.0)
    assert np.all(spectral_curl(np.zeros(g.shape + (3, 3)), g) == 0)


def test_curl_single_mode_closed_form():
    g = GridSpec((6, 16, 4), (6.0, 8.0, 4.0))
    _, x2, _ = g.mesh()
    k = 2 * np.pi / 8.0
    up = np.zeros(g.shape + (3, 3))
    up[..., 0, 2] = np.sin(k * x2)
    alpha = -spectral_curl(up, g)
    expected = np.zeros_like(alpha)
    expected[..., 0, 0] = -k * np.cos(k * x2)
    assert np.abs(alpha - expected).max() < 1e-10 * k


def test_curl_single_mode_against_finite_differences():
    n = 256
    g = GridSpec((4, n, 2), (4.0, 8.0, 2.0))
    _, x2, _ = g.mesh()
    up = np.zeros(g.shape + (3, 3))
    up[..., 0, 2] = np.sin(2 * np.pi * x2 / 8.0)
    fd = -np.gradient(up[..., 0, 2], g.spacing[1], axis=1)
    fd[:, 0] = fd[:, -1] = np.nan
    alpha = -spectral_curl(up, g)[..., 0, 0]
    assert np.nanmax(np.abs(alpha - fd)) < 1e-3


def test_curl_of_gradient_vanishes():
    g = GridSpec((6, 5, 4), (3.0, 5.0, 2.0))
    v = np.random.default_rng(0).normal(size=g.shape + (3,))
    assert np.abs(spectral_curl(spectral_grad(v, g), g)).max() < 1e-12


@given(dims=dims_strategy, seed=st.integers(0, 2 ** 31))
def test_div_of_curl_vanishes(dims, seed):
    g = GridSpec(dims, (1.0 + dims[0], 2.0, 3.0))
    alpha = spectral_curl(_random_tensor(g, seed), g)
    div = spectral_div(alpha, g)
    scale = max(np.abs(alpha).max(), 1e-300)
    assert np.abs(div).max() <= 1e-12 * scale + 1e-15


@given(dims=dims_strategy, seed=st.integers(0, 2 ** 31))
def test_curl_has_zero_mean(dims, seed):
    g = GridSpec(dims, (2.0, 3.0, 5.0))
    alpha = spectral_curl(_random_tensor(g, seed), g)
    assert np.abs(volume_average(alpha)).max() < 1e-12


def test_div_constant_and_single_mode():
    g = GridSpec((8, 4, 4), (8.0, 4.0, 4.0))
    assert np.abs(spectral_div(np.ones(g.shape + (3, 3)), g)).max() < 1e-14
    x1, _, _ = g.mesh()
    k = 2 * np.pi / 8.0
    f = np.zeros(g.shape + (3, 3))
    f[..., 1, 0] = np.cos(k * x1)
    div = spectral_div(f, g)
    assert np.abs(div[..., 1] + k * np.sin(k * x1)).max() < 1e-12
    assert np.abs(div[..., [0, 2]]).max() < 1e-14


def test_non_finite_input_rejected():
    g = GridSpec.cube(2, 1.0)
    f = np.zeros(g.shape + (3, 3))
    f[0, 0, 0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        spectral_curl(f, g)
    with pytest.raises(ValueError):
        check_finite(np.array([np.inf]))
    with pytest.raises(ValueError):
        spectral_curl(np.zeros((2, 2, 2, 3)), g)


def test_volume_average():
    assert volume_average(np.full((3, 4, 5), 2.5)) == 2.5
    g = GridSpec((8, 1, 1), (8.0, 1.0, 1.0))
    x1 = g.mesh()[0]
    assert abs(volume_average(np.sin(2 * np.pi * x1 / 8.0))) < 1e-15
    f = np.random.default_rng(3).normal(size=(3, 2, 4, 3, 3))
    direct = np.zeros((3, 3))
    for idx in np.ndindex(3, 2, 4):
        direct += f[idx]
    assert np.allclose(volume_average(f), direct / 24, rtol=0, atol=1e-14)


# units -------------------------------------------------------------------

def test_aluminum_shear_wave_speed_and_stress_scale():
    assert ALUMINUM.shear_wave_speed == pytest.approx(3109.1, rel=1e-4)
    tau = ALUMINUM.shear_wave_speed * ALUMINUM.eta
    assert tau == pytest.approx(3.1e8, rel=0.01)


def test_density_scale():
    assert nondimensionalize(ALUMINUM, 3.5e7, "dislocation_density") == pytest.approx(1e-2, rel=0.01)
    assert nondimensionalize(ALUMINUM, 0.0, "stress") == 0.0


@given(value=st.floats(-1e12, 1e12, allow_nan=False, allow_subnormal=False),
       unit=st.sampled_from(["length", "time", "stress", "drag", "dislocation_density", "velocity", "strain"]))
def test_round_trip(value, unit):
    back = redimensionalize(ALUMINUM, nondimensionalize(ALUMINUM, value, unit), unit)
    assert back == pytest.approx(value, rel=1e-14, abs=0.0)


def test_unknown_unit_and_bad_params():
    with pytest.raises(ValueError):
        ALUMINUM.scale("furlong")
    with pytest.raises(ValueError):
        MaterialParams(mu=-1.0)
    with pytest.raises(ValueError):
        MaterialParams(tau_y=-1.0)
    assert ALUMINUM.eta_tilde == pytest.approx(0.01191, rel=1e-3)
    assert ALUMINUM.tau_y_tilde == pytest.approx(1e6 / 26.1e9)


# elasticity --------------------------------------------------------------

def test_isotropic_moduli_validation():
    with pytest.raises(ValueError):
        ElasticModuli.isotropic(1.0, 0.0)
    with pytest.raises(ValueError):
        ElasticModuli.isotropic(-1.0, 1.0)
    with pytest.raises(ValueError):
        ElasticModuli()
    C = isotropic_tensor(2.0, 1.0)
    bad = C.copy()
    bad[0, 1, 0, 1] += 0.5
    with pytest.raises(ValueError):
        ElasticModuli(C=bad)


def test_apply_matches_full_tensor():
    rng = np.random.default_rng(1)
    lam, mu = rng.uniform(1, 2, (2, 3, 4)), rng.uniform(1, 2, (2, 3, 4))
    iso = ElasticModuli.isotropic(lam, mu)
    full = ElasticModuli(C=iso.tensor())
    A = rng.normal(size=(2, 3, 4, 3, 3))
    assert np.allclose(iso.apply(A), full.apply(A), atol=1e-13)
    assert not iso.is_uniform and iso.mean().is_uniform


def test_mandel_round_trip():
    A = np.random.default_rng(2).normal(size=(3, 3))
    A = A + A.T
    assert np.allclose(mandel_to_sym(sym_to_mandel(A)), A)
    C = isotropic_tensor(3.0, 2.0)
    m = ElasticModuli(C=C).mandel()
    # eigenvalues of isotropic stiffness: 3 lam + 2 mu (once) and 2 mu (five times)
    assert np.allclose(np.sort(np.linalg.eigvalsh(m)), [4, 4, 4, 4, 4, 13])


def test_acoustic_tensor():
    m = ElasticModuli.isotropic(2.0, 1.0)
    assert np.allclose(m.acoustic(np.array([1.0, 0, 0])), np.diag([4.0, 1.0, 1.0]))
    assert math.isclose(float(ElasticModuli(C=m.tensor()).acoustic(np.array([0, 0, 2.0]))[2, 2]), 16.0)
