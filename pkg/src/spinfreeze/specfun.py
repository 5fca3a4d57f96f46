"""Bessel functions of the first kind and their first maxima."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

MAX_ORDER = 64
MAX_PEAK_ORDER = 16


@dataclass(frozen=True)
class BesselPeak:
    order: int
    x_peak: float
    value: float


def _check_order(n, limit):
    if isinstance(n, (bool, np.bool_)) or int(n) != n:
        raise ValueError(f"Bessel order must be an integer, got {n!r}")
    n = int(n)
    if abs(n) > limit:
        raise ValueError(f"Bessel order |{n}| exceeds supported maximum {limit}")
    return n


def bessel_j(n, x):
    """J_n(x) for integer ``n`` with ``|n| <= 64`` and real finite ``x``.

    Accepts scalar or array ``x``. Negative orders use J_{-n} = (-1)^n J_n
    so the reflection identity holds exactly.
    """
    n = _check_order(n, MAX_ORDER)
    x_arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x_arr)):
        raise ValueError("Bessel argument must be finite")
    value = special.jv(abs(n), x_arr)
    if n < 0 and n % 2:
        value = -value
    if np.ndim(value) == 0:
        return float(value)
    return value


def _derivative_sign(n, x):
    # 2 J_n'(x) = J_{n-1}(x) - J_{n+1}(x)
    return special.jv(n - 1, x) - special.jv(n + 1, x)


def find_first_peak(n: int) -> BesselPeak:
    """First positive maximiser of |J_n| for ``0 <= n <= 16``."""
    n = _check_order(n, MAX_PEAK_ORDER)
    if n < 0:
        raise ValueError("peak search requires a non-negative order")
    if n == 0:
        return BesselPeak(order=0, x_peak=0.0, value=1.0)
    # the first extremum of J_n lies in (n, n + 2 n^(1/3) + 2)
    grid = np.linspace(1e-3, n + 2.0 * n ** (1.0 / 3.0) + 4.0, 4000)
    slope = _derivative_sign(n, grid)
    crossing = np.flatnonzero((slope[:-1] > 0) & (slope[1:] <= 0))[0]
    x_peak = optimize.brentq(
        lambda x: _derivative_sign(n, x), grid[crossing], grid[crossing + 1],
        xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200,
    )
    return BesselPeak(order=n, x_peak=float(x_peak), value=float(special.jv(n, x_peak)))


def efficiency_ceiling(order: int = 2, passes: int = 2) -> float:
    """Retrieval ceiling when an order-``order`` diffraction is applied ``passes`` times."""
    peak = find_first_peak(order)
    return peak.value ** (2 * passes)


# first positive zero of J_0
FIRST_ZERO_J0 = 2.404825557695773
