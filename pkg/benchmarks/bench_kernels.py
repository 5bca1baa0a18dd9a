"""Time the numba kernels against their numpy fallbacks.

Usage: python3 benchmarks/bench_kernels.py [--rows N] [--repeat R]

Both paths are imported explicitly, so the PROBROBUST_DISABLE_NUMBA flag
does not matter here. The end-to-end row runs mc_estimate in a subprocess
per backend because the flag is read at import time.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from probrobust import _kernels as K

E2E = (
    "import time, numpy as np;"
    "from probrobust.model import init_network;"
    "from probrobust.estimators import mc_estimate;"
    "from probrobust.perturb import PerturbSpec;"
    "net = init_network([2, 64, 64, 2], seed=0);"
    "spec = PerturbSpec([0.1, 0.2], 0.3);"
    "mc_estimate(net, spec, 1000, threads=1);"
    "t = time.perf_counter();"
    "mc_estimate(net, spec, {n}, threads=1);"
    "print(time.perf_counter() - t)"
)


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def end_to_end(n, disable):
    env = dict(os.environ, PROBROBUST_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", E2E.format(n=n)], env=env, check=True,
                         capture_output=True, text=True)
    return float(out.stdout.strip())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not K.NUMBA_AVAILABLE:
        sys.exit("numba is not installed; nothing to compare")
    n = args.rows
    rng = np.random.default_rng(0)
    idx = np.arange(n, dtype=np.uint64)
    prefix = K.key_prefix(7, 1)
    X = rng.normal(size=(n, 64))
    W = rng.normal(size=(64, 64))
    b = rng.normal(size=64)
    logits = rng.normal(size=(n, 10))
    ref = rng.integers(0, 10, size=n)

    cases = [
        ("counter_uniforms (d=2)", lambda: K.counter_uniforms_numpy(prefix, idx, 2, 0),
         lambda: K.counter_uniforms_numba(prefix, idx, 2, 0)),
        ("dense 64x64 + relu", lambda: K.dense_numpy(X, W, b, True), lambda: K.dense_numba(X, W, b, True)),
        ("margins (10 classes)", lambda: K.margins_numpy(logits, ref), lambda: K.margins_numba(logits, ref)),
    ]
    print(f"{'kernel':<26}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for name, f_np, f_nb in cases:
        f_nb()  # compile / load cache
        t_np, t_nb = best(f_np, args.repeat), best(f_nb, args.repeat)
        print(f"{name:<26}{t_np * 1e3:>10.2f}{t_nb * 1e3:>10.2f}{t_np / t_nb:>8.2f}x")
    m = 100_000
    t_np, t_nb = end_to_end(m, True), end_to_end(m, False)
    print(f"{'mc_estimate n=1e5, 2-64-64':<26}{t_np * 1e3:>10.2f}{t_nb * 1e3:>10.2f}{t_np / t_nb:>8.2f}x")


if __name__ == "__main__":
    main()
