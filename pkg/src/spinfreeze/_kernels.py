"""Hot inner loops of the phase-space engine.

Each kernel has a numba implementation and a pure-numpy one. The numba
path is used when numba imports and ``SPINFREEZE_BACKEND`` is not set to
``numpy``. Both paths reduce in a fixed order, so results are reproducible
run to run; they agree with each other to round-off only.

Arrays are indexed ``[k, v]`` (or ``[z, v]``) and are expected in Fortran
order so that each velocity class is contiguous.
"""

from __future__ import annotations

import math
import os

import numpy as np

_requested = os.environ.get("SPINFREEZE_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"SPINFREEZE_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is optional
    numba = None
    HAVE_NUMBA = False


def shear_multiply_numpy(spec, k, v, dt):
    """In place: ``spec[i, j] *= exp(-1j * k[i] * v[j] * dt)``."""
    spec *= np.exp(-1j * dt * np.multiply.outer(k, v))
    return spec


def shear_overlap_numpy(coupling, k, v, dt):
    """Return ``sum_ij coupling[i, j] * exp(-1j * k[i] * v[j] * dt)``."""
    total = 0j
    for j in range(v.shape[0]):
        column = coupling[:, j] * np.exp(-1j * (v[j] * dt) * k)
        total += column.sum()
    return complex(total)


if HAVE_NUMBA:

    @numba.njit(cache=True, nogil=True)
    def shear_multiply_numba(spec, k, v, dt):
        nk, nv = spec.shape
        for j in range(nv):
            w = v[j] * dt
            for i in range(nk):
                phi = k[i] * w
                spec[i, j] *= complex(math.cos(phi), -math.sin(phi))
        return spec

    @numba.njit(cache=True, nogil=True)
    def shear_overlap_numba(coupling, k, v, dt):
        nk, nv = coupling.shape
        total = 0j
        for j in range(nv):
            w = v[j] * dt
            partial = 0j
            for i in range(nk):
                phi = k[i] * w
                partial += coupling[i, j] * complex(math.cos(phi), -math.sin(phi))
            total += partial
        return total

else:  # pragma: no cover
    shear_multiply_numba = None
    shear_overlap_numba = None


BACKEND = "numba" if (HAVE_NUMBA and _requested == "numba") else "numpy"

if BACKEND == "numba":
    shear_multiply = shear_multiply_numba
    shear_overlap = shear_overlap_numba
else:
    shear_multiply = shear_multiply_numpy
    shear_overlap = shear_overlap_numpy


def available_backends():
    return ("numba", "numpy") if HAVE_NUMBA else ("numpy",)


def kernels(backend):
    """``(shear_multiply, shear_overlap)`` for the named backend."""
    if backend == "numpy":
        return shear_multiply_numpy, shear_overlap_numpy
    if backend == "numba" and HAVE_NUMBA:
        return shear_multiply_numba, shear_overlap_numba
    raise ValueError(f"backend {backend!r} is not available")
