"""Wavevector-side analysis of the phase-space coherence.

Spectra use a centred phase convention, ``A(k) = sum_z f(z) exp(-i k z) / nz``
with ``z = 0`` at the cloud centre, on a sorted ``k`` axis in units of k0.
With this scaling the sum of ``A`` over a window equals the band-limited
field at the cloud centre, so an isolated order of an unmodulated cloud
sums to one. Parseval reads ``nz * sum|A|^2 == sum|f|^2``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .engine import PhaseSpaceState
from .protocol import Sequence, iter_states
from .specfun import bessel_j


@dataclass(frozen=True)
class KSpectrum:
    k_axis: np.ndarray
    amplitude: np.ndarray
    t: float = 0.0
    # sum of J_n(area)^2 over the orders dropped by kspace_modulate
    truncation_tail: float = 0.0

    @property
    def dk(self) -> float:
        return float(self.k_axis[1] - self.k_axis[0])

    def power(self) -> float:
        return float(np.sum(np.abs(self.amplitude) ** 2))


@dataclass
class FourierMap:
    times: np.ndarray
    spectra: list
    markers: dict = field(default_factory=dict)

    def magnitudes(self, k_max: float | None = None):
        """``(k_axis, |A|)`` with shape ``(n_times, n_k)``, optionally cropped to ``|k| <= k_max``."""
        k = self.spectra[0].k_axis
        keep = slice(None) if k_max is None else np.abs(k) <= k_max + 1e-12
        mags = np.array([np.abs(s.amplitude[keep]) for s in self.spectra])
        return k[keep], mags

    def to_long_csv(self, k_max=None) -> str:
        k, mags = self.magnitudes(k_max)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("t_tau", "k_over_k0", "abs_amplitude"))
        for t, row in zip(self.times, mags):
            for kk, m in zip(k, row):
                w.writerow((repr(float(t)), repr(float(kk)), repr(float(m))))
        return buf.getvalue()

    def to_matrix_csv(self, k_max=None) -> str:
        """Dense matrix: first row ``t\\k`` then the k axis, one row per time."""
        k, mags = self.magnitudes(k_max)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t_tau\\k_over_k0"] + [repr(float(kk)) for kk in k])
        for t, row in zip(self.times, mags):
            w.writerow([repr(float(t))] + [repr(float(m)) for m in row])
        return buf.getvalue()


def spectrum_of(profile: np.ndarray, dz: float, t: float = 0.0, k0: float = 1.0) -> KSpectrum:
    nz = profile.shape[0]
    amp = np.fft.fftshift(np.fft.fft(np.fft.ifftshift(profile))) / nz
    k = np.fft.fftshift(2.0 * math.pi * np.fft.fftfreq(nz, dz)) / k0
    return KSpectrum(k_axis=k, amplitude=amp, t=t)


def v_averaged_profile(s: PhaseSpaceState) -> np.ndarray:
    # the velocity weights are already folded into rho
    return s.rho.sum(axis=1)


def v_averaged_spectrum(s: PhaseSpaceState) -> KSpectrum:
    return spectrum_of(v_averaged_profile(s), s.grid.dz, s.t, s.k0)


def commensurate_shift(spec: KSpectrum, q: float) -> int:
    """Number of k bins spanned by ``q``; raises if ``q`` is not on the grid."""
    bins = q / spec.dk
    nearest = round(bins)
    if abs(bins - nearest) > 1e-9 * max(1.0, abs(bins)):
        raise ValueError(
            f"q={q:.12g} is not commensurate with the k grid (dk={spec.dk:.12g}); "
            f"nearest commensurate q is {nearest * spec.dk:.12g}"
        )
    return int(nearest)


def kspace_modulate(spec: KSpectrum, q: float, area: float, n_max: int = 20) -> KSpectrum:
    """Diffraction of a spectrum by the phase grating ``exp(i area sin(q z))``.

    ``A'(k) = sum_{|n| <= n_max} J_n(area) A(k - n q)``, computed with
    periodic wrap to match the real-space imprint on the periodic domain.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    shift = commensurate_shift(spec, q)
    out = np.zeros_like(spec.amplitude)
    kept = 0.0
    for n in range(-n_max, n_max + 1):
        jn = bessel_j(n, area)
        kept += jn * jn
        out += jn * np.roll(spec.amplitude, n * shift)
    tail = max(0.0, 1.0 - kept)
    return KSpectrum(spec.k_axis, out, spec.t, spec.truncation_tail + tail)


def order_amplitude(spec: KSpectrum, center: float, halfwidth: float) -> complex:
    """Coherent sum of the spectrum over ``|k - center| <= halfwidth``."""
    k = spec.k_axis
    if not halfwidth >= 0:
        raise ValueError("halfwidth must be >= 0")
    if center - halfwidth < k[0] - 0.5 * spec.dk or center + halfwidth > k[-1] + 0.5 * spec.dk:
        raise ValueError("window extends beyond the k axis")
    sel = np.abs(k - center) <= halfwidth + 1e-12 * spec.dk
    if not sel.any():
        raise ValueError(f"no k bins within {halfwidth:g} of {center:g}")
    return complex(np.sum(spec.amplitude[sel]))


def build_fourier_map(seq: Sequence, sampling: float) -> FourierMap:
    """Run ``seq`` and record the velocity-averaged spectrum along the way.

    Waits are sampled every ``sampling`` time units and pulses at each
    Strang substep. ``markers`` maps stage labels (I, II, ... at the pulse
    edges, then the readout) to times.
    """
    total = seq.fixed_duration
    if seq.placeholder_index is not None:
        raise ValueError("fill the wait placeholder before building a map")
    if not sampling > 0:
        raise ValueError("sampling step must be positive")
    if total > 0 and sampling > total:
        raise ValueError(f"sampling step {sampling:g} exceeds the sequence duration {total:g}")
    times, spectra, markers = [], [], {}
    for state, label in iter_states(seq, sampling):
        spec = v_averaged_spectrum(state)
        if times and state.t <= times[-1] + 1e-12:
            # instantaneous events: keep the latest state at that instant
            spectra[-1] = spec
        else:
            times.append(state.t)
            spectra.append(spec)
        if label is not None:
            markers[label] = state.t
    return FourierMap(np.array(times), spectra, markers)


def marker_profiles(seq: Sequence, labels=("I", "II", "III", "IV")):
    """Velocity-averaged ``rho(z)`` at the named stage markers."""
    found = {}
    for state, label in iter_states(seq, max(seq.fixed_duration, 1e-9)):
        if label in labels:
            found[label] = (state.t, v_averaged_profile(state))
    return found


__all__ = [
    "FourierMap",
    "KSpectrum",
    "build_fourier_map",
    "commensurate_shift",
    "kspace_modulate",
    "marker_profiles",
    "order_amplitude",
    "spectrum_of",
    "v_averaged_profile",
    "v_averaged_spectrum",
]
