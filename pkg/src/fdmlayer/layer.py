"""Coupled layer problem: a thin slip layer carrying ``Up = phi e1 (x) e3``
inside a periodic elastic cell.

Dimensionless throughout (lengths in b, stresses in mu, so ``mu = 1``).
The static problem for this plastic distortion is linear in ``phi`` and
the layer average of ``sigma_13`` is a 2D convolution of ``phi``. For
uniform isotropic moduli the kernel is computed once in closed form,

    K(k1, k2) = 1 / (n3 nP) * sum_k3 T(xi) |chi_hat(k3)|^2,
    T(xi) = mu (mu q.N(xi).q - 1),  q = (xi3, 0, xi1),

with ``chi`` the indicator of the layer planes. One coupled step then costs
one 2D FFT pair. ``solve_full`` runs the 3D spectral solver on the embedded
field and is used to cross-check the fast path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.fft as sfft

from .elasticity import ElasticModuli
from .grid import GridSpec, check_finite
from .hj import CFL_CEILING, alpha_from_phi, cfl_dt, kt_step_1d, kt_step_2d
from .microstructure import LayerGrid
from .static import MacroLoad, StaticSolution, solve_homogeneous


# geometry -----------------------------------------------------------------

@dataclass(frozen=True)
class LayerConfig:
    """Slab of ``thickness`` (in b) centered in the cell, normal to x3."""

    thickness: float = 5.0

    def __post_init__(self):
        if not (math.isfinite(self.thickness) and self.thickness > 0):
            raise ValueError("layer thickness must be finite and > 0")

    def n_planes(self, grid: GridSpec) -> int:
        n = max(1, int(round(self.thickness / grid.spacing[2])))
        if n > grid.dims[2]:
            raise ValueError(f"layer of {n} planes does not fit in {grid.dims[2]} planes")
        return n

    def planes(self, grid: GridSpec) -> slice:
        n = self.n_planes(grid)
        start = (grid.dims[2] - n) // 2
        return slice(start, start + n)

    def volume_fraction(self, grid: GridSpec) -> float:
        return self.n_planes(grid) / grid.dims[2]


def layer_grid_of(grid: GridSpec) -> LayerGrid:
    return LayerGrid(grid.dims[0], grid.dims[1], grid.cell_size[0], grid.cell_size[1])


def _check_layer_shape(phi: np.ndarray, grid: GridSpec) -> None:
    if phi.shape != grid.dims[:2]:
        raise ValueError(f"layer field has shape {phi.shape}, the cell needs {grid.dims[:2]}")


def embed_layer(phi: np.ndarray, layer: LayerConfig, grid: GridSpec) -> np.ndarray:
    """3D plastic distortion: ``Up_13 = phi`` on the layer planes, zero elsewhere."""
    phi = np.asarray(phi, dtype=float)
    _check_layer_shape(phi, grid)
    up = np.zeros(grid.shape + (3, 3))
    up[:, :, layer.planes(grid), 0, 2] = phi[:, :, None]
    return up


def extract_layer(up: np.ndarray, layer: LayerConfig, grid: GridSpec) -> np.ndarray:
    """Slab average of ``Up_13`` (the inverse of :func:`embed_layer`)."""
    return up[:, :, layer.planes(grid), 0, 2].mean(axis=2)


def average_layer_stress(sigma: np.ndarray, layer: LayerConfig, grid: GridSpec) -> np.ndarray:
    """``tau_13``: mean of ``sigma_13`` over the layer planes at each (x1, x2)."""
    return sigma[:, :, layer.planes(grid), 0, 2].mean(axis=2)


# static problem -----------------------------------------------------------

def _angular(n: int, length: float, real: bool = False) -> np.ndarray:
    k = sfft.rfftfreq(n, d=1.0 / n) if real else sfft.fftfreq(n, d=1.0 / n)
    xi = 2.0 * np.pi * k / length
    if n % 2 == 0:
        xi[np.abs(k) == n // 2] = 0.0
    return xi


class LayerStaticSolver:
    """Layer-averaged shear stress for a given ``phi`` and macroscopic strain.

    ``lam`` and ``mu`` are the (dimensionless) Lame constants of the
    uniform isotropic cell. All other mean strain components are zero.
    """

    def __init__(self, grid: GridSpec, layer: LayerConfig, lam: float, mu: float = 1.0):
        self.grid = grid
        self.layer = layer
        self.moduli = ElasticModuli.isotropic(lam, mu)
        self.lam, self.mu = float(lam), float(mu)
        self.fraction = layer.volume_fraction(grid)
        self.kernel = self._build_kernel()

    def _build_kernel(self) -> np.ndarray:
        (n1, n2, n3), (l1, l2, l3) = self.grid.dims, self.grid.cell_size
        lam, mu = self.lam, self.mu
        c = (lam + mu) / (lam + 2.0 * mu)
        x1 = _angular(n1, l1)[:, None] ** 2
        x2 = _angular(n2, l2, real=True)[None, :] ** 2
        x3 = _angular(n3, l3) ** 2
        planes = np.zeros(n3)
        planes[self.layer.planes(self.grid)] = 1.0
        chi2 = np.abs(sfft.fft(planes)) ** 2
        nP = planes.sum()
        kernel = np.zeros((n1, n2 // 2 + 1))
        for k3 in range(n3):
            if chi2[k3] < 1e-14 * nP * nP:
                continue
            s = x1 + x2 + x3[k3]
            zero = s == 0
            safe = np.where(zero, 1.0, s)
            qnq = (x1 + x3[k3] - c * 4.0 * x1 * x3[k3] / safe) / (mu * safe)
            t = np.where(zero, -mu, mu * (mu * qnq - 1.0))
            if k3 == 0:
                t[0, 0] = 0.0  # the mean is set by the macroscopic load
            kernel += chi2[k3] * t
        return kernel / (n3 * nP)

    def mean_up13(self, phi: np.ndarray) -> float:
        return float(np.mean(phi)) * self.fraction

    def mean_stress13(self, phi: np.ndarray, eps13: float) -> float:
        """``<sigma_13>`` over the cell for uniform moduli."""
        return 2.0 * self.mu * eps13 - self.mu * self.mean_up13(phi)

    def equilibrium_strain(self, phi: np.ndarray) -> float:
        """Mean strain ``<Up_13>/2`` that makes ``<sigma_13>`` vanish."""
        return 0.5 * self.mean_up13(phi)

    def tau(self, phi: np.ndarray, eps13: float) -> np.ndarray:
        _check_layer_shape(phi, self.grid)
        fluct = sfft.irfft2(self.kernel * sfft.rfft2(phi), s=phi.shape)
        return fluct + self.mean_stress13(phi, eps13)

    def solve_full(self, phi: np.ndarray, eps13: float) -> StaticSolution:
        """Full 3D solve of the embedded field (memory ~ 30 doubles per voxel)."""
        E = np.zeros((3, 3))
        E[0, 2] = E[2, 0] = eps13
        up = embed_layer(phi, self.layer, self.grid)
        return solve_homogeneous(up, self.moduli, MacroLoad.strain_control(E), self.grid)

    def tau_full(self, phi: np.ndarray, eps13: float) -> tuple[np.ndarray, StaticSolution]:
        sol = self.solve_full(phi, eps13)
        return average_layer_stress(sol.stress, self.layer, self.grid), sol


# constitutive pieces ------------------------------------------------------

@dataclass(frozen=True)
class FrictionConfig:
    """Wiggly lattice-friction energy ``G = beta sin(phi / beta) tau_y``.

    ``tau_y`` is dimensionless (in units of mu). ``cos`` of arguments up to
    ~1e7 is evaluated by numpy with full argument reduction, so ``G'`` is
    accurate to a few ulp of ``tau_y`` and reproducible bit for bit.
    """

    beta: float = 1e-8
    tau_y: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise ValueError("beta must be finite and > 0")
        if not (math.isfinite(self.tau_y) and self.tau_y >= 0):
            raise ValueError("tau_y must be finite and >= 0")

    def energy(self, phi: np.ndarray) -> np.ndarray:
        return self.beta * np.sin(phi / self.beta) * self.tau_y

    def slope(self, phi: np.ndarray) -> np.ndarray:
        """``dG/dphi``."""
        if self.tau_y == 0.0:
            return np.zeros_like(phi, dtype=float)
        return np.cos(phi / self.beta) * self.tau_y


def velocity_coefficient(phi: np.ndarray, tau: np.ndarray, friction: FrictionConfig, drag) -> np.ndarray:
    """Celerity ``v0 = (G'(phi) - tau) / eta`` of ``phi_t + v0 |grad phi| = 0``.

    Zero wherever the drag is infinite.
    """
    drag = np.broadcast_to(np.asarray(drag, dtype=float), np.shape(phi))
    if np.any(~(drag > 0)):
        raise ValueError("drag must be > 0 (or inf)")
    blocked = np.isinf(drag)
    v0 = (friction.slope(phi) - tau) / np.where(blocked, 1.0, drag)
    return np.where(blocked, 0.0, v0)


_LEVI = np.zeros((3, 3, 3))
for _i, _j, _k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    _LEVI[_i, _j, _k] = 1.0
    _LEVI[_i, _k, _j] = -1.0


def driving_force_general(sigma: np.ndarray, alpha: np.ndarray, dG=None) -> np.ndarray:
    """``F_i = e_ijk S_mj alpha_mk`` with ``S = sigma - dG/dUp``.

    Arrays carry the tensor indices last: ``sigma``, ``alpha`` and ``dG`` are
    ``(..., 3, 3)`` and the result is ``(..., 3)``.
    """
    s = np.asarray(sigma, dtype=float)
    if dG is not None:
        s = s - dG
    return np.einsum("ijk,...mj,...mk->...i", _LEVI, s, alpha)


def layer_force(tau: np.ndarray, g_slope: np.ndarray, a11: np.ndarray, a12: np.ndarray):
    """In-plane components ``(F1, F2) = (-(tau - G') a12, (tau - G') a11)``."""
    s = tau - g_slope
    return -s * a12, s * a11


def layer_velocity(v0: np.ndarray, a11: np.ndarray, a12: np.ndarray):
    """Dislocation velocity ``V = F / (eta |alpha|)``, zero where ``alpha = 0``."""
    norm = np.hypot(a11, a12)
    safe = np.where(norm > 0, norm, 1.0)
    k = np.where(norm > 0, v0 / safe, 0.0)
    return k * a12, -k * a11


def dissipation_rate(tau, g_slope, a11, a12, v1, v2, thickness: float, cell_area: float) -> float:
    """``D = h sum (tau - G') (a11 V2 - a12 V1) dA``."""
    s = np.asarray(tau) - np.asarray(g_slope)
    return float(thickness * cell_area * np.sum(s * (a11 * v2 - a12 * v1)))


# coupled evolution --------------------------------------------------------

def _front_speed(v0: np.ndarray, norm: np.ndarray) -> float:
    """``max |v0| |grad phi| / max |grad phi|``: the fastest front speed in b per unit time.

    Normalizing the update rate makes the threshold independent of the
    (arbitrary) amplitude of ``phi``.
    """
    peak = float(norm.max())
    if peak == 0.0:
        return 0.0
    return float(np.max(np.abs(v0) * norm)) / peak


SERIES_COLUMNS = ("step", "t", "eps13", "sigma13", "alpha_max", "alpha_integral",
                  "dissipation", "mean_up13")


@dataclass
class LayerState:
    phi: np.ndarray
    eps13: float = 0.0
    t: float = 0.0
    step: int = 0

    def copy(self) -> "LayerState":
        return LayerState(self.phi.copy(), self.eps13, self.t, self.step)


@dataclass
class StepRecord:
    """Diagnostics of one coupled step, taken at the state the step starts from."""

    step: int
    t: float
    eps13: float
    sigma13: float
    alpha_max: float
    alpha_integral: float
    dissipation: float
    mean_up13: float
    rate: float
    dt: float

    def row(self) -> tuple:
        return tuple(getattr(self, c) for c in SERIES_COLUMNS)


@dataclass
class StepFields:
    """Fields of the current step, handed to snapshot callbacks."""

    tau: np.ndarray
    v0: np.ndarray
    a11: np.ndarray
    a12: np.ndarray


class SolverAbort(RuntimeError):
    """Raised when the coupled loop produces non-finite values; carries the last good state."""

    def __init__(self, message: str, state: LayerState, records: list[StepRecord]):
        super().__init__(message)
        self.state = state
        self.records = records


class CoupledModel:
    """Static solve, celerity and transport for one layer configuration.

    ``drag`` is a scalar or a layer field (``inf`` marks obstacles).
    ``verify_every > 0`` compares the fast layer stress with the full 3D
    solve every that many steps and raises if they disagree.
    """

    def __init__(self, grid: GridSpec, layer: LayerConfig, lam: float, friction: FrictionConfig,
                 drag, cfl: float = 0.25, theta: float = 2.0, time_rule: str = "midpoint",
                 substeps: int = 1, verify_every: int = 0, verify_tol: float = 1e-9):
        if not 0.0 < cfl <= CFL_CEILING:
            raise ValueError(f"CFL number must lie in (0, {CFL_CEILING}]")
        if substeps < 1:
            raise ValueError("substeps must be >= 1")
        self.grid = grid
        self.layer = layer
        self.lgrid = layer_grid_of(grid)
        self.static = LayerStaticSolver(grid, layer, lam)
        self.friction = friction
        self.drag = np.broadcast_to(np.asarray(drag, dtype=float), grid.dims[:2]).copy()
        if np.any(~(self.drag > 0)):
            raise ValueError("drag must be > 0 (or inf)")
        self.cfl, self.theta, self.time_rule = cfl, theta, time_rule
        self.substeps = substeps
        self.verify_every = verify_every
        self.verify_tol = verify_tol
        self.last_verification: dict | None = None

    @property
    def spacing(self) -> float:
        return min(self.lgrid.dx, self.lgrid.dy)

    def _alpha(self, phi):
        return alpha_from_phi(phi, self.lgrid.dx, self.lgrid.dy)

    def verify(self, phi: np.ndarray, eps13: float) -> dict:
        """Fast layer stress versus the full 3D solve."""
        fast = self.static.tau(phi, eps13)
        full, sol = self.static.tau_full(phi, eps13)
        scale = max(float(np.abs(full).max()), 1e-300)
        report = {
            "tau_error": float(np.abs(fast - full).max()) / scale,
            "residual": sol.residuals[-1],
            "mean_sigma13": float(sol.mean_stress[0, 2]),
        }
        self.last_verification = report
        if report["tau_error"] > self.verify_tol:
            raise RuntimeError(f"layer stress disagrees with the full solve: {report['tau_error']:.2e}")
        return report

    def evaluate(self, phi: np.ndarray, eps13: float) -> tuple[StepFields, dict]:
        tau = self.static.tau(phi, eps13)
        v0 = velocity_coefficient(phi, tau, self.friction, self.drag)
        a11, a12 = self._alpha(phi)
        norm = np.hypot(a11, a12)
        g = self.friction.slope(phi)
        v1, v2 = layer_velocity(v0, a11, a12)
        area = self.lgrid.dx * self.lgrid.dy
        diss = dissipation_rate(tau, g, a11, a12, v1, v2, self.layer.thickness, area)
        scalars = {
            "sigma13": self.static.mean_stress13(phi, eps13),
            "alpha_max": float(norm.max()),
            "alpha_integral": float(norm.sum() * area),
            "dissipation": diss,
            "mean_up13": self.static.mean_up13(phi),
            "rate": _front_speed(v0, norm),
        }
        return StepFields(tau, v0, a11, a12), scalars

    def transport(self, phi: np.ndarray, v0: np.ndarray, dt: float) -> np.ndarray:
        if self.grid.dims[1] == 1:
            return kt_step_1d(phi[:, 0], v0[:, 0], self.lgrid.dx, dt, self.theta,
                              self.time_rule)[:, None]
        return kt_step_2d(phi, v0, self.lgrid.dx, dt, self.theta, self.lgrid.dy, self.time_rule)

    def step(self, state: LayerState, strain_of_time: Callable[[float, float], float] | None,
             max_dt: float = np.inf) -> tuple[LayerState, StepRecord, StepFields]:
        """One static solve followed by ``substeps`` transport steps.

        ``strain_of_time(phi, t)`` gives ``eps13`` for the static solve.
        """
        eps = state.eps13 if strain_of_time is None else strain_of_time(state.phi, state.t)
        if self.verify_every and state.step % self.verify_every == 0:
            self.verify(state.phi, eps)
        fields, sc = self.evaluate(state.phi, eps)
        if not all(np.isfinite(v) for v in sc.values()):
            raise FloatingPointError("non-finite diagnostics")
        dt, idle = cfl_dt(fields.v0, self.spacing, self.cfl, idle_dt=max_dt if np.isfinite(max_dt) else 1.0)
        dt = min(dt, max_dt)
        phi = state.phi
        if not idle:
            sub = dt / self.substeps
            for _ in range(self.substeps):
                phi = self.transport(phi, fields.v0, sub)
        record = StepRecord(state.step, state.t, eps, sc["sigma13"], sc["alpha_max"], sc["alpha_integral"],
                            sc["dissipation"], sc["mean_up13"], sc["rate"], dt)
        return LayerState(phi, eps, state.t + dt, state.step + 1), record, fields


@dataclass
class EquilibriumReport:
    status: str
    steps: int
    final_rate: float
    drift: float
    records: list[StepRecord] = field(default_factory=list)

    @property
    def equilibrated(self) -> bool:
        return self.status != "not equilibrated"


EQUILIBRIUM = "equilibrium"
OSCILLATING = "oscillating equilibrium"
NOT_EQUILIBRATED = "not equilibrated"


def _window_drift(records: list[StepRecord], window: int, scale: float) -> float:
    """Relative change of the window-averaged ``<Up_13>`` between the last two windows."""
    a = np.mean([r.mean_up13 for r in records[-2 * window:-window]])
    b = np.mean([r.mean_up13 for r in records[-window:]])
    return abs(b - a) / scale


def equilibrate(model: CoupledModel, state: LayerState, tol: float = 1e-8, max_steps: int = 5000,
                window: int = 50, drift_tol: float = 1e-3, min_steps: int = 0,
                callback: Callable[[LayerState, StepRecord, StepFields], None] | None = None
                ) -> tuple[LayerState, EquilibriumReport]:
    """Evolve at zero macroscopic stress (``eps13 = <Up_13>/2``) until the
    microstructure stops evolving.

    Strict equilibrium: the sup-norm of the update rate ``|v0| |grad phi|``,
    divided by ``max |grad phi|``, stays below ``tol`` for ``window``
    consecutive steps. Oscillating
    equilibrium: the rate stays bounded but the mean plastic distortion,
    averaged over successive windows, drifts by less than ``drift_tol``
    relative to ``max |phi|``. Exceeding ``max_steps`` is reported, not raised.
    """
    records: list[StepRecord] = []
    quiet = 0
    scale = max(float(np.abs(state.phi).max()) * model.static.fraction, 1e-300)
    drift = np.inf
    for n in range(max_steps):
        try:
            new, rec, fields = model.step(state, lambda phi, t: model.static.equilibrium_strain(phi))
        except (FloatingPointError, ValueError) as exc:
            raise SolverAbort(f"equilibration aborted at step {state.step}: {exc}", state, records) from exc
        records.append(rec)
        if callback is not None:
            callback(state, rec, fields)
        if rec.rate < tol:
            quiet += 1
            if quiet >= window or rec.rate == 0.0:
                return state, EquilibriumReport(EQUILIBRIUM, n, rec.rate, 0.0, records)
        else:
            quiet = 0
        state = new
        if n + 1 >= max(2 * window, min_steps) and (n + 1) % window == 0:
            drift = _window_drift(records, window, scale)
            if drift < drift_tol:
                return state, EquilibriumReport(OSCILLATING, n + 1, rec.rate, drift, records)
    return state, EquilibriumReport(NOT_EQUILIBRATED, max_steps, records[-1].rate if records else 0.0,
                                    drift, records)


@dataclass(frozen=True)
class StrainRamp:
    """``eps13`` grows at ``rate`` from its current value up to ``target``.

    ``max_increment`` caps the strain change per step.
    """

    rate: float
    target: float
    max_increment: float = 1e-6

    def __post_init__(self):
        if not (math.isfinite(self.rate) and self.rate > 0):
            raise ValueError("ramp rate must be finite and > 0")
        if not math.isfinite(self.target):
            raise ValueError("ramp target must be finite")
        if not self.max_increment > 0:
            raise ValueError("max strain increment must be > 0")


def run_loading(model: CoupledModel, state: LayerState, ramp: StrainRamp, max_steps: int = 1_000_000,
                callback: Callable[[LayerState, StepRecord, StepFields], None] | None = None
                ) -> tuple[LayerState, list[StepRecord]]:
    """Strain-controlled ramp of ``eps13``; one static solve per step.

    The strain of each static solve is the one reached at the start of the
    step. The last step lands exactly on the target.
    """
    eps0, t0 = state.eps13, state.t
    records: list[StepRecord] = []
    sign = 1.0 if ramp.target >= eps0 else -1.0
    duration = abs(ramp.target - eps0) / ramp.rate
    state = state.copy()
    dt_cap = ramp.max_increment / ramp.rate

    def strain(phi, t):
        return eps0 + sign * ramp.rate * min(t - t0, duration)

    for _ in range(max_steps):
        remaining = duration - (state.t - t0)
        if remaining <= 1e-12 * max(duration, 1.0):
            break
        try:
            new, rec, fields = model.step(state, strain, max_dt=min(dt_cap, remaining))
            check_finite(new.phi, "plastic distortion")
        except (FloatingPointError, ValueError) as exc:
            raise SolverAbort(f"loading aborted at step {state.step}: {exc}", state, records) from exc
        records.append(rec)
        if callback is not None:
            callback(state, rec, fields)
        state = new
    else:
        raise SolverAbort(f"ramp not completed within {max_steps} steps", state, records)
    state.eps13 = ramp.target
    return state, records


def final_record(model: CoupledModel, state: LayerState) -> StepRecord:
    """Diagnostics of ``state`` itself (no transport)."""
    _, sc = model.evaluate(state.phi, state.eps13)
    return StepRecord(state.step, state.t, state.eps13, sc["sigma13"], sc["alpha_max"], sc["alpha_integral"],
                      sc["dissipation"], sc["mean_up13"], sc["rate"], 0.0)
