"""Material parameters and the b / mu / V_s nondimensionalization.

Lengths are measured in units of b, times in b / V_s, stresses in mu,
drag in mu / V_s and dislocation densities in 1 / b.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

UNITS = ("length", "time", "stress", "drag", "dislocation_density", "velocity", "strain")


@dataclass(frozen=True)
class MaterialParams:
    b: float = 0.286e-9  # m
    mu: float = 26.1e9  # Pa
    lam: float = 46.3e9  # Pa
    rho: float = 2700.0  # kg m^-3
    eta: float = 1.0e5  # Pa s m^-1
    beta: float = 1.0e-8
    tau_y: float = 1.0e6  # Pa

    def __post_init__(self):
        for name in ("b", "mu", "rho", "eta"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value}")
        if not (self.lam + 2.0 * self.mu / 3.0 > 0):
            raise ValueError("bulk modulus lam + 2 mu / 3 must be positive")
        if not (self.beta >= 0 and self.tau_y >= 0):
            raise ValueError("beta and tau_y must be >= 0")

    @property
    def shear_wave_speed(self) -> float:
        return math.sqrt(self.mu / self.rho)

    def scale(self, unit: str) -> float:
        """Physical value of one dimensionless unit of ``unit``."""
        vs = self.shear_wave_speed
        scales = {
            "length": self.b,
            "time": self.b / vs,
            "stress": self.mu,
            "drag": self.mu / vs,
            "dislocation_density": 1.0 / self.b,
            "velocity": vs,
            "strain": 1.0,
        }
        try:
            return scales[unit]
        except KeyError:
            raise ValueError(f"unknown unit tag {unit!r}; expected one of {UNITS}") from None

    # dimensionless groups used by the solvers
    @property
    def eta_tilde(self) -> float:
        return nondimensionalize(self, self.eta, "drag")

    @property
    def tau_y_tilde(self) -> float:
        return nondimensionalize(self, self.tau_y, "stress")

    @property
    def lam_over_mu(self) -> float:
        return self.lam / self.mu


ALUMINUM = MaterialParams()


def nondimensionalize(params: MaterialParams, value, unit: str):
    return value / params.scale(unit)


def redimensionalize(params: MaterialParams, value, unit: str):
    return value * params.scale(unit)
