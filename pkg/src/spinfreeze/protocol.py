"""Experiment sequences (store, wait, modulate, readout) and storage-time scans."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence as Seq

import numpy as np

from . import _kernels, engine
from .engine import GridSpec, PhaseSpaceState, ReadoutSample
from .specfun import efficiency_ceiling

EVENT_KINDS = ("store", "wait", "modulate", "readout")
TIMING_CONVENTIONS = ("total-elapsed", "wait-only")
CURVE_HEADER = ("storage_time_s", "intensity", "label", "source")
CURVE_SOURCES = ("simulated", "experimental")


@dataclass(frozen=True)
class Event:
    """One step of a sequence. A ``wait`` with ``dt=None`` is the scan placeholder."""

    kind: str
    dt: float | None = None
    q: float = 0.5
    area: float = 0.0
    duration: float = 0.0
    substeps: int = 1

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")
        if self.dt is not None and not self.dt >= 0:
            raise ValueError(f"wait time must be >= 0, got {self.dt!r}")
        if not self.duration >= 0:
            raise ValueError(f"pulse duration must be >= 0, got {self.duration!r}")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise ValueError(f"substeps must be a positive integer, got {self.substeps!r}")

    @classmethod
    def store(cls):
        return cls("store")

    @classmethod
    def wait(cls, dt=None):
        return cls("wait", dt=dt)

    @classmethod
    def modulate(cls, q, area, duration=0.0, substeps=32):
        return cls("modulate", q=q, area=area, duration=duration, substeps=substeps)

    @classmethod
    def readout(cls):
        return cls("readout")

    @property
    def is_placeholder(self) -> bool:
        return self.kind == "wait" and self.dt is None

    @property
    def elapsed(self) -> float:
        if self.kind == "wait":
            return self.dt or 0.0
        if self.kind == "modulate":
            return self.duration
        return 0.0


@dataclass(frozen=True)
class Sequence:
    """A protocol timeline in simulation units (tau, k0).

    ``eta_acs`` multiplies the reported intensity once per modulate event;
    ``time_unit_s`` converts storage times to seconds for curve output.
    """

    events: tuple
    gamma: float = 0.0
    grid: GridSpec = field(default_factory=GridSpec)
    eta_acs: float = 0.71
    timing_convention: str = "total-elapsed"
    time_unit_s: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        ev = self.events
        if len(ev) < 2 or ev[0].kind != "store" or ev[-1].kind != "readout":
            raise ValueError("a sequence must start with 'store' and end with 'readout'")
        if any(e.kind in ("store", "readout") for e in ev[1:-1]):
            raise ValueError("'store' and 'readout' may only appear once, first and last")
        if not (0 < self.eta_acs <= 1):
            raise ValueError(f"eta_acs must lie in (0, 1], got {self.eta_acs!r}")
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma!r}")
        if self.timing_convention not in TIMING_CONVENTIONS:
            raise ValueError(f"timing_convention must be one of {TIMING_CONVENTIONS}")
        if sum(e.is_placeholder for e in ev) > 1:
            raise ValueError("at most one wait placeholder is allowed")

    @property
    def n_modulations(self) -> int:
        return sum(e.kind == "modulate" for e in self.events)

    @property
    def placeholder_index(self) -> int | None:
        for i, e in enumerate(self.events):
            if e.is_placeholder:
                return i
        return None

    @property
    def fixed_duration(self) -> float:
        """Elapsed time of every event except the placeholder."""
        return sum(e.elapsed for e in self.events)

    @property
    def min_storage_time(self) -> float:
        return self.fixed_duration if self.timing_convention == "total-elapsed" else 0.0

    def wait_for(self, storage_time: float) -> float:
        """Placeholder wait realising ``storage_time`` under the timing convention."""
        if self.timing_convention == "wait-only":
            return storage_time
        wait = storage_time - self.fixed_duration
        if wait < -1e-12 * max(1.0, storage_time):
            raise ValueError(
                f"storage time {storage_time:g} is shorter than the sequence's "
                f"fixed events ({self.fixed_duration:g})"
            )
        return max(wait, 0.0)

    def with_storage_time(self, storage_time: float) -> "Sequence":
        idx = self.placeholder_index
        if idx is None:
            raise ValueError("sequence has no wait placeholder")
        events = list(self.events)
        events[idx] = Event.wait(self.wait_for(storage_time))
        return replace(self, events=tuple(events))


@dataclass(frozen=True)
class DecayCurve:
    storage_times: np.ndarray  # s
    intensities: np.ndarray
    label: str = ""
    source: str = "simulated"

    def __post_init__(self):
        t = np.asarray(self.storage_times, dtype=float)
        y = np.asarray(self.intensities, dtype=float)
        if t.shape != y.shape or t.ndim != 1:
            raise ValueError("storage_times and intensities must be 1D arrays of equal length")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("storage_times must be strictly increasing")
        if np.any(y < 0) or not np.all(np.isfinite(y)):
            raise ValueError("intensities must be finite and non-negative")
        if self.source not in CURVE_SOURCES:
            raise ValueError(f"source must be one of {CURVE_SOURCES}")
        object.__setattr__(self, "storage_times", t)
        object.__setattr__(self, "intensities", y)

    def __len__(self):
        return self.storage_times.size

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CURVE_HEADER)
        for t, y in zip(self.storage_times, self.intensities):
            w.writerow((repr(float(t)), repr(float(y)), self.label, self.source))
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({
            "label": self.label,
            "source": self.source,
            "storage_time_s": [float(t) for t in self.storage_times],
            "intensity": [float(y) for y in self.intensities],
        }, indent=2, sort_keys=True) + "\n"

    def save(self, path, fmt: str = "csv") -> None:
        text = self.to_csv() if fmt == "csv" else self.to_json()
        Path(path).write_text(text, encoding="utf-8")


def _run_events(seq: Sequence, state: PhaseSpaceState, events) -> PhaseSpaceState:
    for e in events:
        if e.kind == "wait":
            if e.dt is None:
                raise ValueError("cannot run a sequence with an unfilled wait placeholder")
            state = engine.free_evolve(state, e.dt)
            state = engine.apply_decay(state, e.dt, seq.gamma)
        elif e.kind == "modulate":
            state = engine.apply_lattice(state, e.q, e.area, e.duration, e.substeps)
            state = engine.apply_decay(state, e.duration, seq.gamma)
    return state


def _report(seq: Sequence, amplitude: complex) -> ReadoutSample:
    return ReadoutSample(complex(amplitude) * seq.eta_acs ** (0.5 * seq.n_modulations))


def run_sequence(seq: Sequence) -> ReadoutSample:
    """Store, apply the events in order and read out.

    The reported intensity carries one factor ``eta_acs`` per modulation.
    """
    state = engine.init_state(seq.grid)
    state = _run_events(seq, state, seq.events)
    return _report(seq, engine.readout(state).amplitude)


def iter_states(seq: Sequence, sampling: float) -> Iterator[tuple[PhaseSpaceState, str | None]]:
    """Run ``seq`` yielding intermediate states.

    Waits are sampled every ``sampling`` time units, pulses at each Strang
    substep boundary. The second element marks pulse boundaries with roman
    numerals (start/end of each pulse) and the final readout.
    """
    if not sampling > 0:
        raise ValueError("sampling step must be positive")
    numerals = iter(["I", "II", "III", "IV", "V", "VI", "VII", "VIII", "IX", "X", "XI", "XII"])
    state = engine.init_state(seq.grid)
    for e in seq.events:
        if e.kind == "store":
            yield state, None
        elif e.kind == "wait":
            if e.dt is None:
                raise ValueError("cannot run a sequence with an unfilled wait placeholder")
            n = math.ceil(e.dt / sampling - 1e-9)
            for i in range(n):
                step = min(sampling, e.dt - i * sampling)
                state = engine.free_evolve(state, step)
                state = engine.apply_decay(state, step, seq.gamma)
                yield state, None
        elif e.kind == "modulate":
            yield state, next(numerals)
            if e.duration == 0:
                state = engine.apply_lattice(state, e.q, e.area, 0.0, 1)
            else:
                h = e.duration / e.substeps
                for i in range(e.substeps):
                    state = engine.apply_lattice(state, e.q, e.area / e.substeps, h, 1)
                    state = engine.apply_decay(state, h, seq.gamma)
                    if i < e.substeps - 1:
                        yield state, None
            yield state, next(numerals)
        elif e.kind == "readout":
            yield state, next(numerals)


class _ScanPlan:
    """Storage scan for one template: the evolution before the placeholder is
    run once, and the readout is pulled back once through every event after
    it. Each storage time then costs a single fused overlap sum."""

    def __init__(self, seq: Sequence):
        idx = seq.placeholder_index
        if idx is None:
            raise ValueError("scan template needs exactly one wait placeholder")
        self.seq = seq
        grid = seq.grid
        before = engine.init_state(grid)
        before = _run_events(seq, before, seq.events[:idx])
        phi = engine.readout_functional(grid)
        for e in reversed(seq.events[idx + 1:]):
            if e.kind == "wait":
                phi = engine.shear(phi, grid, -e.dt)
            elif e.kind == "modulate":
                phi = engine.lattice_adjoint(phi, grid, e.q, e.area, e.duration, e.substeps)
        after = [e for e in seq.events[idx + 1:] if e.kind != "readout"]
        self.decay_after = math.exp(-0.5 * seq.gamma * sum(e.elapsed for e in after))
        # Parseval: sum_z conj(a) b == sum_k conj(A) B / nz
        coupling = np.conj(np.fft.fft(phi, axis=0)) * np.fft.fft(before.rho, axis=0) / grid.nz
        self.coupling = np.asfortranarray(coupling)

    def amplitude(self, storage_time: float) -> complex:
        seq = self.seq
        wait = seq.wait_for(storage_time)
        g = seq.grid
        amp = _kernels.shear_overlap(self.coupling, g.k, g.v, float(wait))
        amp *= self.decay_after * math.exp(-0.5 * seq.gamma * wait)
        return complex(amp)


def _check_times(times):
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("storage times must be a non-empty 1D list")
    if np.any(t < 0) or not np.all(np.isfinite(t)):
        raise ValueError("storage times must be finite and >= 0")
    if t.size > 1 and not np.all(np.diff(t) > 0):
        raise ValueError("storage times must be strictly increasing")
    return t


def scan_storage(seq_template: Sequence, times: Seq[float], *, threads: int = 1,
                 method: str = "adjoint", label: str = "") -> DecayCurve:
    """Readout intensity versus storage time (simulation units in ``times``).

    ``method="direct"`` runs every point with :func:`run_sequence`;
    ``"adjoint"`` (default) evaluates the same quantity through a single
    backward pass. Intensities are normalised to the unmodulated readout at
    zero storage time, which the engine fixes to one. Results do not depend
    on ``threads``.
    """
    t = _check_times(times)
    for ts in t:
        seq_template.wait_for(float(ts))
    if method == "direct":
        def point(ts):
            return run_sequence(seq_template.with_storage_time(ts)).intensity
    elif method == "adjoint":
        plan = _ScanPlan(seq_template)

        def point(ts):
            return _report(seq_template, plan.amplitude(ts)).intensity
    else:
        raise ValueError(f"unknown scan method {method!r}")

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(point, [float(x) for x in t]))
    else:
        values = [point(float(x)) for x in t]
    return DecayCurve(t * seq_template.time_unit_s, np.array(values), label=label)


def theoretical_limit(times, gamma: float, label: str = "theoretical limit") -> DecayCurve:
    """``eta_max * exp(-gamma t)`` with ``eta_max = max(J_2)^4``.

    ``times`` and ``gamma`` must use reciprocal units (seconds and 1/s for
    the usual curve output).
    """
    if not gamma >= 0:
        raise ValueError("gamma must be >= 0")
    t = _check_times(times)
    return DecayCurve(t, efficiency_ceiling(2, 2) * np.exp(-gamma * t), label=label)


def unmodulated_sequence(grid: GridSpec = GridSpec(), gamma: float = 0.0, **kw) -> Sequence:
    return Sequence((Event.store(), Event.wait(), Event.readout()), gamma=gamma, grid=grid, **kw)


def extension_sequence(q: float, area: float, duration: float, substeps: int = 32, *,
                       grid: GridSpec = GridSpec(), gamma: float = 0.0, **kw) -> Sequence:
    """Modulate, wait (placeholder), modulate again just before readout."""
    pulse = Event.modulate(q, area, duration, substeps)
    return Sequence((Event.store(), pulse, Event.wait(), pulse, Event.readout()),
                    gamma=gamma, grid=grid, **kw)


def calibration_sequence(q: float, rate: float, duration: float, storage_time: float,
                         substeps: int = 32, *, grid: GridSpec = GridSpec(),
                         gamma: float = 0.0, **kw) -> Sequence:
    """One pulse of length ``duration`` accumulating ``rate * duration``, read out
    at a fixed total ``storage_time``."""
    if duration > storage_time:
        raise ValueError("pulse longer than the fixed storage time")
    pulse = Event.modulate(q, rate * duration, duration, substeps)
    return Sequence((Event.store(), pulse, Event.wait(storage_time - duration), Event.readout()),
                    gamma=gamma, grid=grid, **kw)
