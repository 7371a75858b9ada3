import numpy as np
import pytest

from fdmlayer.diagnostics import (corner_radius, disk_neighbourhood, full_width_half_max, level_area,
                                  mean_radius, radial_profile, ring_width)
from fdmlayer.hj import alpha_norm
from fdmlayer.microstructure import (LayerGrid, MicrostructureSpec, circular_loop, disk_mask, drag_field,
                                     gaussian_lowpass, half_square_waves, make_microstructure, polygon_loop,
                                     random_disk_centers, random_noisy, random_smoothed, square_loop)

GRID = LayerGrid.square(128, 320.0)


def test_layer_grid_geometry():
    g = LayerGrid(8, 4, 16.0, 2.0)
    assert (g.dx, g.dy, g.shape, g.center) == (2.0, 0.5, (8, 4), (8.0, 1.0))
    x, y = g.mesh()
    assert x.shape == (8, 4) and x[3, 0] == 6.0 and y[0, 3] == 1.5
    with pytest.raises(ValueError):
        LayerGrid(0, 4, 1.0, 1.0)
    with pytest.raises(ValueError):
        LayerGrid(4, 4, 1.0, 0.0)


def test_circular_loop_plateau_and_density():
    phi = circular_loop(GRID, 60.0, width=10.0, amplitude=1e-2)
    assert phi.max() == pytest.approx(0.1) and phi.min() == 0.0
    c = GRID.n1 // 2
    assert phi[c, c] == pytest.approx(0.1)
    # along an axis the ramp is sampled exactly
    a = alpha_norm(phi, GRID.dx)
    assert a[c + 24, c] == pytest.approx(1e-2, rel=1e-12)
    assert a.max() == pytest.approx(1e-2, rel=0.05)
    with pytest.raises(ValueError, match="exceeds"):
        circular_loop(GRID, 158.0)


def test_square_and_polygon_loops_agree():
    sq = square_loop(GRID, 60.0)
    cx, cy = GRID.center
    verts = [(cx - 60, cy - 60), (cx + 60, cy - 60), (cx + 60, cy + 60), (cx - 60, cy + 60)]
    assert np.allclose(polygon_loop(GRID, verts), sq, atol=1e-15)
    assert np.allclose(polygon_loop(GRID, verts[::-1]), sq, atol=1e-15)
    tri = polygon_loop(GRID, [(100, 100), (220, 100), (160, 210)])
    assert tri.max() == pytest.approx(0.1)
    with pytest.raises(ValueError, match="convex"):
        polygon_loop(GRID, [(100, 100), (220, 100), (160, 120), (160, 210)])
    with pytest.raises(ValueError):
        polygon_loop(GRID, [(1, 1), (2, 2)])


def test_half_square_waves():
    n, L = 320, 320.0
    phi = half_square_waves(n, L)
    slope = np.diff(phi)
    assert np.allclose(slope[46:56], -1e-2) and np.allclose(slope[264:274], 1e-2)
    assert phi[0] == pytest.approx(0.1) and phi[100] == 0.0
    with pytest.raises(ValueError):
        half_square_waves(n, L, left=(46.0, 60.0))


@pytest.mark.parametrize("kind", ["random-noisy", "random-smoothed"])
def test_random_fields_are_normalized(kind):
    spec = MicrostructureSpec(kind, amplitude=3.5e-4)
    phi = make_microstructure(spec, GRID, np.random.default_rng(0))
    assert abs(phi.mean()) < 1e-18
    assert alpha_norm(phi, GRID.dx, GRID.dy).max() == pytest.approx(3.5e-4, rel=1e-12)
    again = make_microstructure(spec, GRID, np.random.default_rng(0))
    assert np.array_equal(phi, again)


def test_smoothing_removes_short_wavelengths():
    rng = np.random.default_rng(1)
    noisy = random_noisy(GRID, 1.0, rng)
    smooth = random_smoothed(GRID, 1.0, np.random.default_rng(1), wavelength=40.0)
    # same max density, far larger (smoother) displacements
    assert np.abs(smooth).max() > 3 * np.abs(noisy).max()
    x, _ = GRID.mesh()
    wave = np.cos(2 * np.pi * x / 40.0)
    assert np.allclose(gaussian_lowpass(wave, GRID, 40.0), np.exp(-0.5) * wave, atol=1e-12)
    with pytest.raises(ValueError):
        gaussian_lowpass(wave, GRID, 0.0)


def test_make_microstructure_validation():
    with pytest.raises(ValueError, match="unknown"):
        MicrostructureSpec("hexagon")
    with pytest.raises(ValueError):
        MicrostructureSpec("circular-loop", amplitude=-1.0)
    with pytest.raises(ValueError, match="1D"):
        make_microstructure(MicrostructureSpec("half-square-waves-1D"), GRID)
    with pytest.raises(ValueError, match="2D"):
        make_microstructure(MicrostructureSpec("circular-loop"), LayerGrid(64, 1, 320.0, 1.0))
    with pytest.raises(ValueError, match="random generator"):
        make_microstructure(MicrostructureSpec("random-noisy"), GRID)
    line = make_microstructure(MicrostructureSpec("half-square-waves-1D"), LayerGrid(320, 1, 320.0, 1.0))
    assert line.shape == (320, 1)


def test_disks_and_drag():
    mask = disk_mask(GRID, [(0.0, 0.0)], 10.0)
    # wraps around all four corners
    assert mask[0, 0] and mask[-1, -1] and mask[0, -1] and not mask[64, 64]
    assert mask.sum() == disk_mask(GRID, [(160.0, 160.0)], 10.0).sum()
    eta = drag_field(GRID, 2.0, mask)
    assert np.all(np.isinf(eta[mask])) and np.all(eta[~mask] == 2.0)
    with pytest.raises(ValueError):
        drag_field(GRID, 0.0)


def test_random_disk_placement():
    ring = alpha_norm(circular_loop(GRID, 40.0), GRID.dx) > 0
    centers = random_disk_centers(GRID, 10, 10.0, np.random.default_rng(2), gap=5.0, exclude=ring)
    assert len(centers) == 10
    for i, a in enumerate(centers):
        for b in centers[i + 1:]:
            d = np.hypot(*[(p - q + L / 2) % L - L / 2 for p, q, L in zip(a, b, (320.0, 320.0))])
            assert d >= 25.0
    assert not np.any(disk_mask(GRID, centers, 10.0) & ring)
    with pytest.raises(ValueError, match="could only place"):
        random_disk_centers(GRID, 500, 30.0, np.random.default_rng(3), max_tries=200)


# -- diagnostics -------------------------------------------------------------

def test_ring_measurements():
    phi = circular_loop(GRID, 60.0)
    a = alpha_norm(phi, GRID.dx)
    assert mean_radius(a, GRID) == pytest.approx(60.0, abs=0.5)
    assert ring_width(a, GRID) == pytest.approx(10.0, abs=2 * GRID.dx)
    assert mean_radius(np.zeros(GRID.shape), GRID) == 0.0
    r, prof = radial_profile(np.ones(GRID.shape), GRID)
    assert np.allclose(prof, 1.0) and np.all(np.diff(r) > 0)


def test_full_width_half_max():
    x = np.linspace(-5, 5, 1001)
    assert full_width_half_max(x, np.exp(-x ** 2 / 2)) == pytest.approx(2 * np.sqrt(2 * np.log(2)), abs=1e-4)
    assert full_width_half_max(x, np.where(np.abs(x) <= 1, 1.0, 0.0)) == pytest.approx(2.0, abs=0.02)


def test_corner_radius_and_area():
    level = 0.05
    sq = square_loop(GRID, 60.0)
    assert abs(corner_radius(sq, GRID, level)) < GRID.dx
    disc = circular_loop(GRID, 60.0)
    assert corner_radius(disc, GRID, level) == pytest.approx(60.0, abs=GRID.dx)
    assert level_area(disc, GRID, level) == pytest.approx(np.pi * 60.0 ** 2, rel=0.02)
    with pytest.raises(ValueError):
        corner_radius(np.zeros(GRID.shape), GRID, level)


def test_disk_neighbourhood():
    m = np.zeros((9, 9), bool)
    m[0, 0] = True
    grown = disk_neighbourhood(m, 1)
    assert grown.sum() == 9 and grown[-1, -1] and grown[1, 1] and not grown[2, 2]
