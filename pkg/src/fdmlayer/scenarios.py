"""Scenario runner: builds the initial state from a :class:`RunConfig`,
runs it and writes snapshots, time series, images and a summary.

Output directory layout::

    config.yaml          resolved configuration
    series.csv           one row per step
    snapshots/step_<k>/  header.txt + one .f64 file per field
    images/alpha_<k>.pgm ||alpha|| / (image_scale * initial max ||alpha||)
    summary.json         final scalars and invariant checks
    abort/               last good state and message (solver failure only)
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import layer as lay
from .config import RunConfig, dump_config
from .diagnostics import mean_radius
from .grid import GridSpec, set_workers
from .hj import alpha_from_phi, cfl_dt, kt_step_1d, kt_step_2d
from .io import Snapshot, write_series, write_snapshot
from .microstructure import (LayerGrid, MicrostructureSpec, disk_mask, drag_field, make_microstructure,
                             random_disk_centers)
from .render import render_alpha_map
from .units import nondimensionalize

UNCOUPLED_COLUMNS = ("step", "t", "alpha_max", "alpha_integral", "mean_phi")

EXIT_OK, EXIT_CONFIG, EXIT_ABORT = 0, 2, 3


@dataclass
class RunResult:
    status: str
    exit_code: int
    summary: dict
    series: list[tuple] = field(default_factory=list)
    phi: np.ndarray | None = None


def layer_grid(cfg: RunConfig) -> LayerGrid:
    n1, n2, _ = cfg.dims
    length2 = cfg.grid.length if n2 > 1 else 1.0  # unit strip: integrals are line integrals
    return LayerGrid(n1, n2, cfg.grid.length, length2)


def amplitude(cfg: RunConfig) -> float:
    m = cfg.microstructure
    if m.amplitude is not None:
        return m.amplitude
    return nondimensionalize(cfg.material.params(cfg.friction), m.alpha_max, "dislocation_density")


def microstructure_spec(cfg: RunConfig) -> MicrostructureSpec:
    m = cfg.microstructure
    return MicrostructureSpec(kind=m.kind, amplitude=amplitude(cfg), radius=m.radius, half_side=m.half_side,
                              vertices=None if m.vertices is None else tuple(m.vertices), width=m.width,
                              left=m.left, right=m.right, wavelength=m.wavelength, center=m.center)


def precipitate_mask(cfg: RunConfig, grid: LayerGrid, phi0: np.ndarray, rng: np.random.Generator) -> np.ndarray | None:
    p = cfg.precipitates
    if p.kind == "none":
        return None
    if p.centers is not None:
        centers = [tuple(c) for c in p.centers]
    elif p.kind == "dual":
        cx, cy = grid.center
        centers = [(cx - p.distance, cy), (cx + p.distance, cy)]
    else:
        a11, a12 = alpha_from_phi(phi0, grid.dx, grid.dy)
        ring = np.hypot(a11, a12) > 0
        centers = random_disk_centers(grid, p.count, p.radius, rng, gap=p.gap, exclude=ring)
    return disk_mask(grid, centers, p.radius)


def _density(phi: np.ndarray, grid: LayerGrid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    a11, a12 = alpha_from_phi(phi, grid.dx, grid.dy)
    return a11, a12, np.hypot(a11, a12)


class _Writer:
    """Snapshot and image output at a fixed step cadence."""

    def __init__(self, out: Path | None, grid: LayerGrid, every: int, images: bool, scale: float):
        self.out, self.grid, self.every = out, grid, every
        self.images = images and grid.n2 > 1
        self.scale = scale
        self.written: list[int] = []

    def due(self, step: int) -> bool:
        return step == 0 or (self.every > 0 and step % self.every == 0)

    def write(self, step: int, t: float, eps13: float, phi: np.ndarray, tau=None, scalars=None):
        if self.out is None or step in self.written:
            return
        a11, a12, norm = _density(phi, self.grid)
        fields = {"phi": phi, "alpha11": a11, "alpha12": a12, "alpha_norm": norm}
        if tau is not None:
            fields["tau13"] = tau
        sc = {"alpha_max": float(norm.max()),
              "alpha_integral": float(norm.sum() * self.grid.dx * self.grid.dy)}
        sc.update(scalars or {})
        snap = Snapshot(step, t, eps13, (self.grid.dx, self.grid.dy), fields, sc)
        write_snapshot(self.out / "snapshots" / f"step_{step:06d}", snap)
        if self.images:
            render_alpha_map(norm, self.scale, self.out / "images" / f"alpha_{step:06d}.pgm")
        self.written.append(step)


def _prepare_output(out, cfg: RunConfig) -> Path | None:
    if out is None:
        return None
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(dump_config(cfg))
    return out


def _finish(out: Path | None, result: RunResult, columns) -> RunResult:
    if out is not None:
        write_series(out / "series.csv", columns, result.series)
        (out / "summary.json").write_text(json.dumps(result.summary, indent=2, sort_keys=True) + "\n")
    return result


def run_uncoupled(cfg: RunConfig, out=None) -> RunResult:
    """Transport with a uniform celerity up to ``t_end``."""
    grid = layer_grid(cfg)
    out = _prepare_output(out, cfg)
    phi0 = make_microstructure(microstructure_spec(cfg), grid)
    one_d = grid.n2 == 1
    tr = cfg.transport
    v0 = np.full(grid.shape, tr.velocity)
    alpha0 = _density(phi0, grid)[2].max()
    writer = _Writer(out, grid, cfg.output.snapshot_every, cfg.output.images, cfg.output.image_scale * alpha0)
    h = grid.dx if one_d else min(grid.dx, grid.dy)
    dt_full, idle = cfl_dt(v0, h, tr.cfl, idle_dt=tr.t_end)
    phi, t, step, rows = phi0, 0.0, 0, []

    def record():
        norm = _density(phi, grid)[2]
        rows.append((step, t, float(norm.max()), float(norm.sum() * grid.dx * grid.dy), float(phi.mean())))

    while True:
        record()
        if writer.due(step):
            writer.write(step, t, 0.0, phi)
        if t >= tr.t_end * (1 - 1e-12) or step >= tr.max_steps:
            break
        dt = min(dt_full, tr.t_end - t)
        if not idle:
            if one_d:
                phi = kt_step_1d(phi[:, 0], v0[:, 0], grid.dx, dt, tr.theta, tr.time_rule)[:, None]
            else:
                phi = kt_step_2d(phi, v0, grid.dx, dt, tr.theta, grid.dy, tr.time_rule)
        t += dt
        step += 1
    writer.write(step, t, 0.0, phi)
    final = _density(phi, grid)[2]
    summary = {
        "scenario": cfg.scenario, "status": "completed", "steps": step, "t": t,
        "alpha_max_initial": float(alpha0), "alpha_max_final": float(final.max()),
        "alpha_max_drift": float(final.max() / alpha0 - 1.0) if alpha0 > 0 else 0.0,
        "snapshots": writer.written,
    }
    if not one_d:
        summary["mean_radius_initial"] = mean_radius(_density(phi0, grid)[2], grid)
        summary["mean_radius_final"] = mean_radius(final, grid)
    return _finish(out, RunResult("completed", EXIT_OK, summary, rows, phi), UNCOUPLED_COLUMNS)


def coupled_model(cfg: RunConfig, drag) -> lay.CoupledModel:
    n1, n2, n3 = cfg.dims
    L = cfg.grid.length
    grid3 = GridSpec((n1, n2, n3), (L, L, L))
    params = cfg.material.params(cfg.friction)
    friction = lay.FrictionConfig(cfg.friction.beta, params.tau_y_tilde)
    tr = cfg.transport
    return lay.CoupledModel(grid3, lay.LayerConfig(cfg.layer.thickness), params.lam_over_mu, friction, drag,
                            cfl=tr.cfl, theta=tr.theta, time_rule=tr.time_rule, substeps=tr.substeps,
                            verify_every=cfg.verify_every)


def run_coupled(cfg: RunConfig, out=None) -> RunResult:
    """Equilibration and strain ramps of the layer model, phase by phase."""
    grid = layer_grid(cfg)
    out = _prepare_output(out, cfg)
    rng = np.random.default_rng(cfg.seed)
    phi0 = make_microstructure(microstructure_spec(cfg), grid, rng)
    mask = precipitate_mask(cfg, grid, phi0, rng)
    params = cfg.material.params(cfg.friction)
    drag = drag_field(grid, params.eta_tilde, mask)
    model = coupled_model(cfg, drag)
    alpha0 = _density(phi0, grid)[2].max()
    writer = _Writer(out, grid, cfg.output.snapshot_every, cfg.output.images, cfg.output.image_scale * alpha0)
    rows: list[tuple] = []
    phases: list[dict] = []
    sigma_eq = [0.0]
    verify: list[dict] = []

    def on_step(state, rec, fields, phase_kind):
        rows.append(rec.row())
        if phase_kind == "equilibrate":
            sigma_eq[0] = max(sigma_eq[0], abs(rec.sigma13))
        if model.last_verification is not None and state.step % max(cfg.verify_every, 1) == 0 and cfg.verify_every:
            verify.append(dict(model.last_verification, step=state.step))
        if writer.due(state.step):
            writer.write(state.step, state.t, rec.eps13, state.phi, fields.tau,
                         {"sigma13": rec.sigma13, "dissipation": rec.dissipation})

    state = lay.LayerState(phi0.copy())
    status, code, message = "completed", EXIT_OK, None
    try:
        for ph in cfg.loading:
            start = state.step
            if ph.kind == "equilibrate":
                state, rep = lay.equilibrate(model, state, tol=ph.tol, max_steps=ph.max_steps, window=ph.window,
                                             drift_tol=ph.drift_tol,
                                             callback=lambda s, r, f: on_step(s, r, f, "equilibrate"))
                phases.append({"kind": "equilibrate", "status": rep.status, "steps": rep.steps,
                               "first_step": start, "final_rate": rep.final_rate,
                               "drift": None if not np.isfinite(rep.drift) else rep.drift})
            else:
                state, recs = lay.run_loading(model, state, lay.StrainRamp(ph.rate, ph.target, ph.max_increment),
                                              max_steps=ph.max_steps,
                                              callback=lambda s, r, f: on_step(s, r, f, "ramp"))
                phases.append({"kind": "ramp", "target": ph.target, "steps": len(recs), "first_step": start})
    except lay.SolverAbort as exc:
        status, code, message = "aborted", EXIT_ABORT, str(exc)
        state = exc.state
        if out is not None:
            dump = Snapshot(state.step, state.t, state.eps13, (grid.dx, grid.dy), {"phi": state.phi}, {})
            write_snapshot(out / "abort", dump)
            (out / "abort" / "message.txt").write_text(message + "\n")
    last = lay.final_record(model, state)
    if code == EXIT_OK:
        writer.write(state.step, state.t, state.eps13, state.phi, model.static.tau(state.phi, state.eps13),
                     {"sigma13": last.sigma13, "dissipation": last.dissipation})
    diss = np.array([r[SERIES_INDEX["dissipation"]] for r in rows]) if rows else np.zeros(1)
    d_scale = float(np.abs(diss).max())
    final = _density(state.phi, grid)[2]
    checks = {
        "dissipation_min": float(diss.min()),
        "dissipation_nonnegative": bool(diss.min() >= -1e-12 * d_scale),
        "max_abs_mean_sigma13_equilibrate": sigma_eq[0],
    }
    if mask is not None:
        checks["obstacle_phi_change"] = float(np.abs(state.phi[mask] - phi0[mask]).max())
        checks["precipitate_cells"] = int(mask.sum())
    if verify:
        checks["verification"] = verify
    summary = {
        "scenario": cfg.scenario, "status": status, "steps": state.step, "t": state.t, "eps13": state.eps13,
        "phases": phases, "checks": checks,
        "alpha_max_initial": float(alpha0), "alpha_max_final": float(final.max()),
        "alpha_retained": float(final.max() / alpha0) if alpha0 > 0 else 0.0,
        "mean_radius_initial": mean_radius(_density(phi0, grid)[2], grid),
        "mean_radius_final": mean_radius(final, grid),
        "snapshots": writer.written,
    }
    if message:
        summary["message"] = message
    return _finish(out, RunResult(status, code, summary, rows, state.phi), lay.SERIES_COLUMNS)


SERIES_INDEX = {c: i for i, c in enumerate(lay.SERIES_COLUMNS)}


def run_scenario(cfg: RunConfig, output=None) -> RunResult:
    """Run one configured scenario; ``output`` (a directory) receives the artifacts."""
    set_workers(cfg.threads)
    if cfg.coupled:
        return run_coupled(cfg, output)
    return run_uncoupled(cfg, output)
