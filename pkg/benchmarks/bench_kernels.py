"""Time the compiled particle kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--particles N] [--repeat R]
"""
import argparse
import math
import timeit

import numpy as np

from radioslam import _core_py
from radioslam.kernels import AOA_BIT, RSS_BIT, TOA_BIT

try:
    from radioslam import _core
except ImportError:
    _core = None


def inputs(n, K=10, J=8, seed=0):
    rng = np.random.default_rng(seed)
    pos = rng.uniform(-5, 5, (n, 2))
    alpha = rng.uniform(-0.5, 0.5, n)
    omega = rng.uniform(0, 5, n)
    feats = np.empty((K, n, 4))
    feats[..., :2] = rng.uniform(-10, 10, (K, n, 2))
    feats[..., 2] = rng.uniform(-45, -25, (K, n))
    feats[..., 3] = rng.uniform(2, 5, (K, n))
    meas = np.column_stack([rng.uniform(-math.pi, math.pi, J), rng.uniform(0, 15, J), rng.uniform(-90, -40, J)])
    w = rng.random(n)
    w /= w.sum()
    anc = np.sort(rng.integers(0, n, n)).astype(np.intp)
    kin = rng.normal(size=(n, 4))
    parts = rng.normal(size=(n, 4))
    push = rng.normal(0, 0.3, n)
    return pos, alpha, omega, feats, meas, w, anc, kin, parts, push


def cases(mod, data):
    pos, alpha, omega, feats, meas, w, anc, kin, parts, push = data
    flags = AOA_BIT | TOA_BIT | RSS_BIT
    return {
        "legacy_factors (K=10, J=8)": lambda: mod.legacy_factors(pos, alpha, omega, feats, meas, flags,
                                                                  0.02, 0.15, 2.5, 0.0),
        "systematic_indices": lambda: mod.systematic_indices(w, 0.37),
        "gather_slide": lambda: mod.gather_slide(parts, anc, kin, push),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--particles", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    data = inputs(args.particles)
    backends = {"numpy": _core_py}
    if _core is not None:
        backends["cython"] = _core
    else:
        print("compiled extension not built; timing the numpy fallback only")
    timings = {}
    for name, mod in backends.items():
        for case, fn in cases(mod, data).items():
            fn()
            timings[(case, name)] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
    print(f"N_s = {args.particles}, best of {args.repeat}")
    print(f"{'kernel':30s} {'numpy ms':>10s} {'cython ms':>10s} {'speed-up':>9s}")
    for case in cases(_core_py, data):
        py = timings[(case, "numpy")] * 1e3
        cy = timings.get((case, "cython"))
        if cy is None:
            print(f"{case:30s} {py:10.2f} {'-':>10s} {'-':>9s}")
        else:
            print(f"{case:30s} {py:10.2f} {cy * 1e3:10.2f} {py / (cy * 1e3):8.1f}x")


if __name__ == "__main__":
    main()
