"""Compare the numba and numpy kernel backends.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Each backend runs in its own interpreter since the choice is fixed at
import time through SPINFREEZE_BACKEND. Timings are best-of-N wall clock
on the default grid (2048 x 400).
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from spinfreeze import _kernels
from spinfreeze.engine import GridSpec, free_evolve, init_state
from spinfreeze.protocol import extension_sequence, scan_storage
from spinfreeze.specfun import find_first_peak

repeat = int(sys.argv[1])
grid = GridSpec()
rng = np.random.default_rng(0)
spec = np.asfortranarray(rng.normal(size=(grid.nz, grid.nv)) + 1j * rng.normal(size=(grid.nz, grid.nv)))
state = init_state(grid)
seq = extension_sequence(0.485, find_first_peak(2).x_peak, 0.54, 32, grid=grid)
times = np.linspace(1.08, 30.0, 76)

def best(fn):
    fn()  # warm-up (numba compiles or loads its cache here)
    out = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return min(out)

res = {
    "backend": _kernels.BACKEND,
    "shear_multiply": best(lambda: _kernels.shear_multiply(spec.copy(order="F"), grid.k, grid.v, 0.3)),
    "shear_overlap": best(lambda: _kernels.shear_overlap(spec, grid.k, grid.v, 0.3)),
    "free_evolve": best(lambda: free_evolve(state, 1.0)),
    "scan_76_points": best(lambda: scan_storage(seq, times)),
}
print(json.dumps(res))
"""


def run(backend, repeat):
    env = dict(os.environ, SPINFREEZE_BACKEND=backend)
    out = subprocess.run([sys.executable, "-c", WORKER, str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rows = [run(b, args.repeat) for b in ("numpy", "numba")]
    if rows[1]["backend"] != "numba":
        print("numba is not installed; only the numpy backend was timed")
        rows = rows[:1]
    keys = [k for k in rows[0] if k != "backend"]
    print(f"{'kernel':<16}" + "".join(f"{r['backend']:>12}" for r in rows)
          + ("     speedup" if len(rows) == 2 else ""))
    for k in keys:
        line = f"{k:<16}" + "".join(f"{r[k] * 1e3:>10.2f}ms" for r in rows)
        if len(rows) == 2:
            line += f"{rows[0][k] / rows[1][k]:>11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
