"""Run configuration: YAML text validated into a :class:`RunConfig`.

Every scenario has a complete default configuration; a config file only
lists what it changes. Unknown keys are rejected and all problems are
reported at once through :class:`ConfigError`.
"""
from __future__ import annotations

import copy
from typing import Annotated, Literal, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .hj import CFL_CEILING, TIME_RULES
from .microstructure import MICROSTRUCTURE_KINDS
from .units import MaterialParams

SCENARIOS = ("annihilation-1d", "loop-2d-expand", "polygon-2d", "loop-coupled", "orowan-dual",
             "orowan-random", "patterning-noisy", "patterning-smooth")
UNCOUPLED = ("annihilation-1d", "loop-2d-expand", "polygon-2d")
U64_MAX = 2 ** 64 - 1


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every problem found."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {e}" for e in self.errors))


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridConfig(_Strict):
    n: int = Field(256, ge=2, description="points along x1")
    n2: int | None = Field(None, ge=1, description="points along x2 (default n; 1 for a line)")
    n3: int | None = Field(None, ge=1, description="points along x3 of the elastic cell (default n)")
    length: float = Field(320.0, gt=0, description="cell edge in units of b")


class MaterialConfig(_Strict):
    b: float = Field(MaterialParams.b, gt=0)
    mu: float = Field(MaterialParams.mu, gt=0)
    lam: float = MaterialParams.lam
    rho: float = Field(MaterialParams.rho, gt=0)
    eta: float = Field(MaterialParams.eta, gt=0)

    def params(self, friction: "FrictionModel") -> MaterialParams:
        return MaterialParams(b=self.b, mu=self.mu, lam=self.lam, rho=self.rho, eta=self.eta,
                              beta=friction.beta, tau_y=friction.tau_y)


class FrictionModel(_Strict):
    beta: float = Field(1e-8, gt=0)
    tau_y: float = Field(1e6, ge=0, description="Pa")


class LayerModel(_Strict):
    thickness: float = Field(5.0, gt=0, description="units of b")


class MicrostructureModel(_Strict):
    kind: Literal[MICROSTRUCTURE_KINDS]
    amplitude: float | None = Field(None, gt=0, description="dimensionless density")
    alpha_max: float | None = Field(None, gt=0, description="density in 1/m, converted with b")
    radius: float = Field(50.0, gt=0)
    half_side: float = Field(60.0, gt=0)
    vertices: list[tuple[float, float]] | None = None
    width: float = Field(10.0, gt=0)
    left: tuple[float, float] = (46.0, 56.0)
    right: tuple[float, float] = (264.0, 274.0)
    wavelength: float = Field(40.0, gt=0)
    center: tuple[float, float] | None = None

    @model_validator(mode="after")
    def _one_amplitude(self):
        if (self.amplitude is None) == (self.alpha_max is None):
            raise ValueError("give exactly one of amplitude (dimensionless) or alpha_max (1/m)")
        return self


class PrecipitateModel(_Strict):
    kind: Literal["none", "dual", "random"] = "none"
    radius: float = Field(16.0, gt=0)
    distance: float = Field(70.0, ge=0, description="dual: center offset along x1")
    centers: list[tuple[float, float]] | None = None
    count: int = Field(6, ge=1)
    gap: float = Field(5.0, ge=0)


class TransportModel(_Strict):
    cfl: float = Field(0.25, gt=0, le=CFL_CEILING)
    theta: float = Field(2.0, ge=1, le=2)
    time_rule: Literal[TIME_RULES] = "midpoint"
    substeps: int = Field(1, ge=1)
    velocity: float = Field(-1.0, description="uniform v0 of uncoupled scenarios")
    t_end: float = Field(50.0, gt=0, description="end time of uncoupled scenarios")
    max_steps: int = Field(1_000_000, ge=1)


class EquilibratePhase(_Strict):
    kind: Literal["equilibrate"]
    tol: float = Field(1e-8, gt=0)
    max_steps: int = Field(3000, ge=1)
    window: int = Field(50, ge=1)
    drift_tol: float = Field(1e-3, gt=0)


class RampPhase(_Strict):
    kind: Literal["ramp"]
    rate: float = Field(2e-8, gt=0, description="d eps13 / d t (dimensionless time)")
    target: float
    max_increment: float = Field(1e-6, gt=0)
    max_steps: int = Field(1_000_000, ge=1)


Phase = Annotated[Union[EquilibratePhase, RampPhase], Field(discriminator="kind")]


class OutputModel(_Strict):
    snapshot_every: int = Field(0, ge=0, description="steps between snapshots (0: first and last only)")
    images: bool = True
    image_scale: float = Field(1.0, gt=0, description="white level as a fraction of the initial max density")


class RunConfig(_Strict):
    scenario: Literal[SCENARIOS]
    grid: GridConfig = GridConfig()
    material: MaterialConfig = MaterialConfig()
    friction: FrictionModel = FrictionModel()
    layer: LayerModel = LayerModel()
    microstructure: MicrostructureModel
    precipitates: PrecipitateModel = PrecipitateModel()
    transport: TransportModel = TransportModel()
    loading: list[Phase] = []
    output: OutputModel = OutputModel()
    seed: int = Field(0, ge=0, le=U64_MAX)
    threads: int = Field(1, ge=1)
    verify_every: int = Field(0, ge=0, description="full 3D cross-check cadence (0: off)")

    @property
    def coupled(self) -> bool:
        return self.scenario not in UNCOUPLED

    @property
    def dims(self) -> tuple[int, int, int]:
        g = self.grid
        n2 = g.n2 if g.n2 is not None else (1 if self.microstructure.kind == "half-square-waves-1D" else g.n)
        return g.n, n2, g.n3 if g.n3 is not None else g.n

    @model_validator(mode="after")
    def _consistent(self):
        errors = []
        n1, n2, _ = self.dims
        one_d = self.microstructure.kind == "half-square-waves-1D"
        if one_d and n2 != 1:
            errors.append("grid.n2 must be 1 for half-square-waves-1D")
        if not one_d and n2 < 2:
            errors.append(f"{self.microstructure.kind} needs a 2D grid (n2 >= 2)")
        if self.coupled:
            if one_d:
                errors.append("coupled scenarios need a 2D layer")
            if not self.loading:
                errors.append("coupled scenarios need at least one loading phase")
        elif self.loading:
            errors.append("loading phases apply to coupled scenarios only")
        if not self.coupled and self.precipitates.kind != "none":
            errors.append("precipitates apply to coupled scenarios only")
        if errors:
            raise ValueError("; ".join(errors))
        return self


def _loop(radius, **extra):
    return {"kind": "circular-loop", "radius": radius, "width": 10.0, "alpha_max": 1e3, **extra}


_COUPLED_GRID = {"n": 128, "length": 320.0}
_DEFAULTS: dict[str, dict] = {
    "annihilation-1d": {
        "grid": {"n": 2048, "n2": 1},
        "microstructure": {"kind": "half-square-waves-1D", "amplitude": 1e-2},
        "transport": {"velocity": -1.0, "t_end": 120.0},
        "output": {"snapshot_every": 256},
    },
    "loop-2d-expand": {
        "grid": {"n": 256},
        "microstructure": {"kind": "circular-loop", "radius": 50.0, "width": 10.0, "amplitude": 1e-2},
        "transport": {"velocity": -1.0, "t_end": 50.0},
        "output": {"snapshot_every": 40},
    },
    "polygon-2d": {
        "grid": {"n": 256},
        "microstructure": {"kind": "polygonal-loop", "half_side": 60.0, "width": 10.0, "amplitude": 1e-2},
        "transport": {"velocity": -1.0, "t_end": 60.0},
        "output": {"snapshot_every": 48},
    },
    "loop-coupled": {
        "grid": dict(_COUPLED_GRID),
        "microstructure": _loop(60.0),
        "loading": [{"kind": "equilibrate"}, {"kind": "ramp", "rate": 2e-8, "target": 1.1e-4}],
        "output": {"snapshot_every": 20},
    },
    "orowan-dual": {
        "grid": dict(_COUPLED_GRID),
        "microstructure": _loop(40.0),
        "precipitates": {"kind": "dual", "radius": 16.0, "distance": 70.0},
        "loading": [{"kind": "equilibrate"}, {"kind": "ramp", "rate": 2e-8, "target": 1.2e-4}],
        "output": {"snapshot_every": 20},
    },
    "orowan-random": {
        "grid": dict(_COUPLED_GRID),
        "microstructure": _loop(40.0),
        "precipitates": {"kind": "random", "radius": 10.0, "count": 12, "gap": 5.0},
        "loading": [{"kind": "equilibrate"}, {"kind": "ramp", "rate": 2e-8, "target": 1.2e-4}],
        "output": {"snapshot_every": 20},
    },
    "patterning-noisy": {
        "grid": {"n": 128, "length": 320.0},
        "microstructure": {"kind": "random-noisy", "alpha_max": 1e3},
        "loading": [{"kind": "equilibrate"}, {"kind": "ramp", "rate": 2e-8, "target": 3e-5}],
        "output": {"snapshot_every": 20},
    },
    "patterning-smooth": {
        "grid": {"n": 128, "length": 320.0},
        "microstructure": {"kind": "random-smoothed", "alpha_max": 1e3, "wavelength": 40.0},
        "loading": [{"kind": "equilibrate"}, {"kind": "ramp", "rate": 2e-8, "target": 3e-5}],
        "output": {"snapshot_every": 20},
    },
}


def scenario_defaults(scenario: str) -> dict:
    if scenario not in _DEFAULTS:
        raise ConfigError([f"scenario: unknown scenario {scenario!r}; expected one of {', '.join(SCENARIOS)}"])
    return {"scenario": scenario, **copy.deepcopy(_DEFAULTS[scenario])}


def merge_config(base: dict, override: dict) -> dict:
    """Recursive dict merge; lists and scalars in ``override`` replace."""
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            # a different microstructure kind starts from scratch
            if key == "microstructure" and value.get("kind", out[key].get("kind")) != out[key].get("kind"):
                out[key] = dict(value)
            else:
                base_value = dict(out[key])
                if key == "microstructure":
                    # the two amplitude spellings replace each other
                    for a, b in (("amplitude", "alpha_max"), ("alpha_max", "amplitude")):
                        if a in value:
                            base_value.pop(b, None)
                out[key] = merge_config(base_value, value)
        else:
            out[key] = value
    return out


def _format(err: dict) -> str:
    loc = ".".join(str(p) for p in err.get("loc", ())) or "config"
    msg = err.get("msg", "invalid")
    if err.get("type") == "extra_forbidden":
        msg = "unknown key"
    return f"{loc}: {msg}"


def validate_config(data, scenario: str | None = None) -> RunConfig:
    """Validate a mapping, filling unspecified values from the scenario defaults."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError([f"config: expected a mapping at top level, got {type(data).__name__}"])
    name = data.get("scenario", scenario)
    if name is None:
        raise ConfigError(["scenario: missing required key"])
    if scenario is not None and name != scenario:
        raise ConfigError([f"scenario: config names {name!r} but {scenario!r} was requested"])
    if not isinstance(name, str) or name not in _DEFAULTS:
        raise ConfigError([f"scenario: unknown scenario {name!r}; expected one of {', '.join(SCENARIOS)}"])
    merged = merge_config(scenario_defaults(name), data)
    try:
        return RunConfig.model_validate(merged)
    except ValidationError as exc:
        raise ConfigError([_format(e) for e in exc.errors()]) from None


def parse_config(text: str, scenario: str | None = None) -> RunConfig:
    """Parse YAML text into a validated :class:`RunConfig`.

    Total: any malformed input raises :class:`ConfigError`.
    """
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"config: not valid YAML ({exc})"]) from None
    return validate_config(data, scenario)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.model_dump(mode="json", exclude_none=True), sort_keys=False)
