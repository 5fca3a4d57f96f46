"""Phase-space simulation of thermal spin-wave dephasing and its suppression
by sinusoidal ac-Stark lattice modulation."""

__version__ = "0.1.0"

from .engine import (
    GridSpec,
    PhaseSpaceState,
    ReadoutSample,
    apply_decay,
    apply_lattice,
    free_evolve,
    init_state,
    readout,
)
from .protocol import DecayCurve, Event, Sequence, run_sequence, scan_storage, theoretical_limit
from .specfun import BesselPeak, bessel_j, find_first_peak
from .units import PhysicalParams, Scales, derive_scales, to_dimensionless

__all__ = [
    "BesselPeak",
    "DecayCurve",
    "Event",
    "GridSpec",
    "PhaseSpaceState",
    "PhysicalParams",
    "ReadoutSample",
    "Scales",
    "Sequence",
    "apply_decay",
    "apply_lattice",
    "bessel_j",
    "derive_scales",
    "find_first_peak",
    "free_evolve",
    "init_state",
    "readout",
    "run_sequence",
    "scan_storage",
    "theoretical_limit",
    "to_dimensionless",
]
