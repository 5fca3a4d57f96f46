"""Laboratory parameters, derived physical scales and dimensionless units.

All simulation work happens in units where the spin-wave wavenumber ``k0``,
the thermal velocity ``v_t`` and the thermal dephasing time ``tau = 1/(k0 v_t)``
are all equal to one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

# CODATA 2018
BOLTZMANN = 1.380649000e-23  # J/K, exact
ATOMIC_MASS_UNIT = 1.660539067e-27  # kg
RB87_MASS_U = 86.90918053

DEFAULT_GAMMA = 1.0 / (2.0 * math.pi * 24.1e-6)  # 1/s, intensity decay rate

GEOMETRIES = ("counter_propagating",)


@dataclass(frozen=True)
class PhysicalParams:
    """Laboratory inputs in SI units. Defaults describe the 87Rb ladder memory."""

    lambda_probe: float = 780e-9
    lambda_coupling: float = 480e-9
    geometry: str = "counter_propagating"
    temperature: float = 78e-6
    atomic_mass: float = RB87_MASS_U * ATOMIC_MASS_UNIT
    gamma: float = DEFAULT_GAMMA
    lattice_angle: float = math.radians(18.5)
    lattice_wavelength: float = 780e-9

    def __post_init__(self) -> None:
        for name in ("lambda_probe", "lambda_coupling", "lattice_wavelength",
                     "temperature", "atomic_mass"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite number, got {value!r}")
        if not (math.isfinite(self.gamma) and self.gamma >= 0):
            raise ValueError(f"gamma must be >= 0, got {self.gamma!r}")
        if not 0 < self.lattice_angle < math.pi:
            raise ValueError(f"lattice_angle must lie in (0, pi), got {self.lattice_angle!r}")
        if self.geometry not in GEOMETRIES:
            raise ValueError(f"unsupported geometry {self.geometry!r}; expected one of {GEOMETRIES}")


@dataclass(frozen=True)
class Scales:
    k0: float  # rad/m
    v_t: float  # m/s
    tau: float  # s
    q_lattice: float  # rad/m


def derive_scales(p: PhysicalParams) -> Scales:
    """Spin-wave wavenumber, thermal velocity, dephasing time and lattice wavenumber."""
    k0 = 2.0 * math.pi * abs(1.0 / p.lambda_probe - 1.0 / p.lambda_coupling)
    if k0 == 0:
        raise ValueError("probe and coupling wavelengths coincide: k0 = 0")
    v_t = math.sqrt(BOLTZMANN * p.temperature / p.atomic_mass)
    tau = 1.0 / (k0 * v_t)
    q_lattice = 4.0 * math.pi / p.lattice_wavelength * math.sin(p.lattice_angle / 2.0)
    return Scales(k0=k0, v_t=v_t, tau=tau, q_lattice=q_lattice)


@dataclass(frozen=True)
class DimensionlessConfig:
    """Unit system of the simulation.

    Lengths are measured in ``length_unit`` (1/k0), times in ``time_unit``
    (tau) and velocities in ``velocity_unit`` (v_t). ``gamma`` and
    ``q_lattice`` are the dimensionless decay rate and lattice wavenumber.
    """

    length_unit: float
    time_unit: float
    velocity_unit: float
    gamma: float
    q_lattice: float
    scales: Scales = field(repr=False)

    def time(self, seconds):
        return seconds / self.time_unit

    def seconds(self, t):
        return t * self.time_unit

    def length(self, metres):
        return metres / self.length_unit

    def metres(self, x):
        return x * self.length_unit

    def velocity(self, metres_per_second):
        return metres_per_second / self.velocity_unit

    def metres_per_second(self, u):
        return u * self.velocity_unit

    def wavenumber(self, rad_per_metre):
        return rad_per_metre * self.length_unit

    def rad_per_metre(self, kappa):
        return kappa / self.length_unit

    def rate(self, per_second):
        return per_second * self.time_unit

    def per_second(self, r):
        return r / self.time_unit


def to_dimensionless(p: PhysicalParams, s: Scales) -> DimensionlessConfig:
    return DimensionlessConfig(
        length_unit=1.0 / s.k0,
        time_unit=s.tau,
        velocity_unit=s.v_t,
        gamma=p.gamma * s.tau,
        q_lattice=s.q_lattice / s.k0,
        scales=s,
    )
