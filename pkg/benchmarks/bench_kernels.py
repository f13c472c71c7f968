"""Compiled stencil core against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 20]

Per-kernel timings call both implementations in one process; the end-to-end
heat solve runs in subprocesses so that ``RICCILAB_PURE_PYTHON`` picks the
backend at import, exactly as in normal use.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from riccilab._kernels import compiled_impl, python_impl

SOLVE = """
import time
import numpy as np
from riccilab._kernels import BACKEND
from riccilab.fixtures import fixture_trace
from riccilab.heat import grid_spacing, solve_forward_heat
tr = fixture_trace("sine-torus", 0.02, {"n": 96})
st = tr.state_at(0.0)
t0 = time.perf_counter()
sol = solve_forward_heat(tr, (0.5, 0.5), 0.0, 3 * grid_spacing(st), t_end=0.02)
print(BACKEND, time.perf_counter() - t0, float(sol.mass[-1]))
"""


def _cases(n_torus, n_radial):
    rng = np.random.default_rng(0)
    u = rng.random((n_torus, n_torus))
    inv_m = 1 + rng.random((n_torus, n_torus))
    out = np.empty_like(u)
    r = rng.random(n_radial)
    kap = rng.random(n_radial)
    im = 1 + rng.random(n_radial)
    rout = np.empty_like(r)
    return {
        "lap5": lambda m: m.lap5(u),
        "ricci_rhs_torus": lambda m: m.ricci_rhs_torus(0.1 * u, 100.0),
        "torus_heat_stage": lambda m: m.torus_heat_stage(u, u, inv_m, 1e-4, 0.75, out),
        "torus_conjugate_stage": lambda m: m.torus_conjugate_stage(u, u, inv_m, 1e-4, 0.75, out),
        "flux_apply": lambda m: m.flux_apply(r, kap, 0.0),
        "radial_heat_stage": lambda m: m.radial_heat_stage(r, r, im, kap, 1e-4, 0.75, rout),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--n-torus", type=int, default=256)
    ap.add_argument("--n-radial", type=int, default=4096)
    args = ap.parse_args(argv)

    if compiled_impl is None:
        print("compiled core not built; only the fallback is available")
    print(f"{'kernel':24s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speed-up':>9s}")
    for name, call in _cases(args.n_torus, args.n_radial).items():
        tp = min(timeit.repeat(lambda: call(python_impl), number=1, repeat=args.repeat)) * 1e3
        if compiled_impl is None:
            print(f"{name:24s} {tp:12.3f} {'-':>12s} {'-':>9s}")
            continue
        tc = min(timeit.repeat(lambda: call(compiled_impl), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:24s} {tp:12.3f} {tc:12.3f} {tp / tc:8.1f}x")

    print("\nend-to-end heat solve (sine torus, 96^2)")
    for pure in ("1", "0"):
        env = dict(os.environ, RICCILAB_PURE_PYTHON=pure)
        res = subprocess.run([sys.executable, "-c", SOLVE], env=env, capture_output=True, text=True, check=True)
        backend, secs, mass = res.stdout.split()
        print(f"  {backend:8s} {float(secs):8.3f} s   final mass {float(mass):.15f}")


if __name__ == "__main__":
    main()
