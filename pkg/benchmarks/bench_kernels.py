"""Compare the compiled and numpy kernel backends.

Times the two hot kernels on a 726 x 56 problem (D = 2) and a
short full-sampler run under each backend. The sampler timing runs in a
subprocess per backend because the backend is chosen at import.

    python benchmarks/bench_kernels.py [--n 726] [--p 56] [--sweeps 1000]
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from lsirm import _kernels_py

try:
    from lsirm import _ckernels
except ImportError:
    _ckernels = None

SWEEP_SNIPPET = """
import json, time
import numpy as np
from lsirm import kernels
from lsirm.datagen import GenSpec, generate
from lsirm.model import ModelSpec
from lsirm.sampler import McmcConfig, run_chain
data, _ = generate(GenSpec(ModelSpec(), {n}, {p}), 0)
cfg = McmcConfig(niter={sweeps}, nburn=0, nthin=1, seed=1)
t0 = time.perf_counter()
run_chain(data, ModelSpec(), cfg=cfg, progress=False)
print(json.dumps({{"backend": kernels.BACKEND, "ms_per_sweep": 1e3 * (time.perf_counter() - t0) / {sweeps}}}))
"""


def time_call(fn, *args, repeat=5, number=200):
    return 1e3 * min(timeit.repeat(lambda: fn(*args), repeat=repeat, number=number)) / number


def kernel_timings(n, p, d=2):
    g = np.random.default_rng(0)
    z, w = g.normal(size=(n, d)), g.normal(size=(p, d))
    y = (g.random((n, p)) < 0.5).astype(float)
    weight = np.ones((n, p))
    theta, beta, alpha = g.normal(size=n), g.normal(size=p), np.ones(p)
    dist = _kernels_py.distance_matrix(z, w)
    rows = []
    for name, mod in (("python", _kernels_py), ("cython", _ckernels)):
        if mod is None:
            continue
        rows.append({
            "backend": name,
            "distance_ms": time_call(mod.distance_matrix, z, w),
            "cell_loglik_ms": time_call(mod.cell_loglik, y, weight, theta, alpha, beta, 1.0, dist, True, 1.0),
        })
    return rows


def sweep_timing(n, p, sweeps, pure):
    env = dict(os.environ)
    if pure:
        env["LSIRM_PURE_PYTHON"] = "1"
    else:
        env.pop("LSIRM_PURE_PYTHON", None)
    out = subprocess.run([sys.executable, "-c", SWEEP_SNIPPET.format(n=n, p=p, sweeps=sweeps)],
                         env=env, check=True, capture_output=True, text=True).stdout
    return json.loads(out.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=726)
    ap.add_argument("--p", type=int, default=56)
    ap.add_argument("--sweeps", type=int, default=1000)
    args = ap.parse_args(argv)

    print(f"kernels at N={args.n} P={args.p} D=2 (ms per call, best of 5)")
    for row in kernel_timings(args.n, args.p):
        print(f"  {row['backend']:<7} distance {row['distance_ms']:8.4f}   cell_loglik {row['cell_loglik_ms']:8.4f}")
    if _ckernels is None:
        print("  compiled extension not built; only the numpy backend was timed")

    print(f"full sampler, {args.sweeps} sweeps (1PL binary, free gamma)")
    for pure in (True, False):
        res = sweep_timing(args.n, args.p, args.sweeps, pure)
        projected = res["ms_per_sweep"] * 15000 / 1e3
        print(f"  {res['backend']:<7} {res['ms_per_sweep']:7.3f} ms/sweep   projected 15000 sweeps: {projected:6.1f} s")


if __name__ == "__main__":
    main()
