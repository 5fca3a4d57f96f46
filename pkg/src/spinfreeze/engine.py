"""1D phase-space evolution of a stored spin-wave coherence.

The coherence ``rho[z, v]`` lives on a periodic position grid and a finite
set of velocity classes. Units are those of :mod:`spinfreeze.units`:
lengths in 1/k0, times in tau, velocities in v_t, so by default ``k0 = 1``.

Free streaming shifts every velocity class by ``v * dt`` along ``z``. It is
done spectrally (exact sub-grid shifts on the periodic domain), the lattice
imprint is a position-dependent phase, and radiative decay is a scalar.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import _kernels

SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class GridSpec:
    """Phase-space discretisation.

    ``cloud_sigma`` is the Gaussian width L of the atomic density, the
    position grid spans ``[-z_half_span*L, z_half_span*L)`` and the
    velocity classes span ``[-v_half_span, v_half_span]`` inclusive.
    """

    nz: int = 2**11
    nv: int = 400
    z_half_span: float = 4.0
    v_half_span: float = 4.0
    cloud_sigma: float = 15.0 * math.pi

    def __post_init__(self):
        if int(self.nz) != self.nz or self.nz < 256 or self.nz & (self.nz - 1):
            raise ValueError(f"nz must be a power of two >= 256, got {self.nz!r}")
        if int(self.nv) != self.nv or self.nv < 16:
            raise ValueError(f"nv must be an integer >= 16, got {self.nv!r}")
        for name in ("z_half_span", "v_half_span", "cloud_sigma"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value!r}")
        self.check_resolves(1.0)

    def check_resolves(self, k0: float) -> None:
        # points per spin-wave period must exceed two
        if self.nz * math.pi / (self.z_half_span * self.cloud_sigma * k0) <= 1.0:
            raise ValueError(
                f"grid with nz={self.nz} over +-{self.z_half_span}L (L={self.cloud_sigma:g}) "
                f"does not resolve k0={k0:g}"
            )

    @property
    def length(self) -> float:
        return 2.0 * self.z_half_span * self.cloud_sigma

    @property
    def dz(self) -> float:
        return self.length / self.nz

    @property
    def dk(self) -> float:
        return 2.0 * math.pi / self.length

    @cached_property
    def z(self) -> np.ndarray:
        # z = 0 sits at index nz // 2
        return (np.arange(self.nz) - self.nz // 2) * self.dz

    @cached_property
    def v(self) -> np.ndarray:
        return np.linspace(-self.v_half_span, self.v_half_span, self.nv)

    @cached_property
    def k(self) -> np.ndarray:
        """Wavenumbers in FFT order."""
        return 2.0 * math.pi * np.fft.fftfreq(self.nz, self.dz)

    @cached_property
    def weights(self) -> np.ndarray:
        w = np.exp(-0.5 * self.v**2)
        return w / w.sum()

    @cached_property
    def envelope(self) -> np.ndarray:
        return np.exp(-0.5 * (self.z / self.cloud_sigma) ** 2)

    @cached_property
    def anchor(self) -> float:
        """Readout normalisation: the unmodulated t=0 overlap."""
        return float(self.envelope.sum())


@dataclass
class PhaseSpaceState:
    rho: np.ndarray
    t: float
    grid: GridSpec
    k0: float = 1.0

    def copy(self) -> "PhaseSpaceState":
        return PhaseSpaceState(self.rho.copy(order="F"), self.t, self.grid, self.k0)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.rho) ** 2)))


@dataclass(frozen=True)
class ReadoutSample:
    amplitude: complex
    intensity: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "intensity", float(abs(self.amplitude) ** 2))


def init_state(grid: GridSpec, k0: float = 1.0) -> PhaseSpaceState:
    """Stored plane spin wave with Gaussian density and thermal velocity weights."""
    grid.check_resolves(k0)
    column = np.exp(1j * k0 * grid.z) * grid.envelope
    rho = np.asfortranarray(np.multiply.outer(column, grid.weights))
    return PhaseSpaceState(rho=rho, t=0.0, grid=grid, k0=k0)


def shear(rho: np.ndarray, grid: GridSpec, dt: float) -> np.ndarray:
    """Free streaming of a ``[z, v]`` array by ``dt`` (any sign); returns a new array."""
    spec = np.fft.fft(rho, axis=0)
    spec = np.asfortranarray(spec)
    _kernels.shear_multiply(spec, grid.k, grid.v, float(dt))
    return np.asfortranarray(np.fft.ifft(spec, axis=0))


def lattice_phase(grid: GridSpec, q: float, area: float) -> np.ndarray:
    return np.exp(1j * area * np.sin(q * grid.z))


def free_evolve(s: PhaseSpaceState, dt: float) -> PhaseSpaceState:
    if not dt >= 0:
        raise ValueError(f"free evolution needs dt >= 0, got {dt!r}")
    if dt == 0:
        return s.copy()
    return PhaseSpaceState(shear(s.rho, s.grid, dt), s.t + dt, s.grid, s.k0)


def _pulse(rho, grid, q, area, duration, substeps, sign):
    # Strang splitting: half drift, (kick, drift)*, ending on a half drift
    if duration == 0:
        return rho * lattice_phase(grid, q, sign * area)[:, None]
    kick = lattice_phase(grid, q, sign * area / substeps)[:, None]
    h = sign * duration / substeps
    rho = shear(rho, grid, 0.5 * h)
    for i in range(substeps):
        rho *= kick
        rho = shear(rho, grid, h if i < substeps - 1 else 0.5 * h)
    return rho


def _check_pulse(duration, substeps):
    if not duration >= 0:
        raise ValueError(f"pulse duration must be >= 0, got {duration!r}")
    if int(substeps) != substeps or substeps < 1:
        raise ValueError(f"substeps must be a positive integer, got {substeps!r}")


def apply_lattice(s: PhaseSpaceState, q: float, area: float, duration: float = 0.0,
                  substeps: int = 32) -> PhaseSpaceState:
    """Imprint the phase ``area * sin(q z)`` accumulated over ``duration``.

    With ``duration > 0`` atoms keep moving while the phase builds up; the
    pulse is split into ``substeps`` Strang steps. ``duration == 0`` is an
    instantaneous imprint.
    """
    _check_pulse(duration, substeps)
    rho = _pulse(s.rho, s.grid, q, area, duration, int(substeps), +1)
    return PhaseSpaceState(np.asfortranarray(rho), s.t + duration, s.grid, s.k0)


def lattice_adjoint(phi: np.ndarray, grid: GridSpec, q: float, area: float,
                    duration: float = 0.0, substeps: int = 32) -> np.ndarray:
    """Pull a readout functional back through one lattice pulse.

    If ``U`` is the pulse, ``sum(conj(phi) * U(rho)) == sum(conj(U^H phi) * rho)``.
    The pulse is palindromic, so ``U^H`` is the same splitting run with
    negated time and phase.
    """
    _check_pulse(duration, substeps)
    return np.asfortranarray(_pulse(phi, grid, q, area, duration, int(substeps), -1))


def apply_decay(s: PhaseSpaceState, dt: float, gamma: float) -> PhaseSpaceState:
    """Radiative decay: intensity falls by ``exp(-gamma * dt)``. Time is not advanced."""
    if not (dt >= 0 and gamma >= 0):
        raise ValueError("decay needs dt >= 0 and gamma >= 0")
    if gamma == 0 or dt == 0:
        return s.copy()
    return PhaseSpaceState(s.rho * math.exp(-0.5 * gamma * dt), s.t, s.grid, s.k0)


def readout_carrier(grid: GridSpec, k0: float = 1.0) -> np.ndarray:
    return np.exp(-1j * k0 * grid.z)


def readout(s: PhaseSpaceState) -> ReadoutSample:
    """Overlap with the counter-rotating wave, averaged over z and v."""
    carrier = readout_carrier(s.grid, s.k0)
    total = np.sum(s.rho * carrier[:, None])
    return ReadoutSample(complex(total) / s.grid.anchor)


def readout_functional(grid: GridSpec, k0: float = 1.0) -> np.ndarray:
    """``phi`` with ``readout(s).amplitude == sum(conj(phi) * s.rho)``."""
    column = np.conj(readout_carrier(grid, k0)) / grid.anchor
    return np.asfortranarray(np.repeat(column[:, None], grid.nv, axis=1))


def save_state(path, s: PhaseSpaceState) -> None:
    """Write a snapshot as ``.npz``.

    Layout: ``rho`` little-endian complex128 of shape (nz, nv) and ``header``,
    a JSON string holding nz, nv, z_half_span, v_half_span, cloud_sigma, k0, t.
    """
    g = s.grid
    header = {
        "version": SNAPSHOT_VERSION,
        "nz": g.nz, "nv": g.nv,
        "z_half_span": g.z_half_span, "v_half_span": g.v_half_span,
        "cloud_sigma": g.cloud_sigma, "k0": s.k0, "t": s.t,
    }
    with open(Path(path), "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header, sort_keys=True)),
                 rho=np.ascontiguousarray(s.rho).astype("<c16"))


def load_state(path) -> PhaseSpaceState:
    with np.load(Path(path), allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        rho = np.asfortranarray(data["rho"].astype(np.complex128))
    if header.get("version") != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {header.get('version')!r}")
    grid = GridSpec(nz=header["nz"], nv=header["nv"], z_half_span=header["z_half_span"],
                    v_half_span=header["v_half_span"], cloud_sigma=header["cloud_sigma"])
    if rho.shape != (grid.nz, grid.nv):
        raise ValueError(f"snapshot array shape {rho.shape} does not match header")
    return PhaseSpaceState(rho=rho, t=header["t"], grid=grid, k0=header["k0"])
