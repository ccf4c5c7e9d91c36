"""Compiled kernels against the NumPy fallback, plus one fast-cell family solve.

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from reistokes import kernels
from reistokes.cellsolve import solve_fast_family
from reistokes.fields import CoefficientSpec, CoefficientTerm, PeriodicGrid, sample_coefficient


def _cases():
    rng = np.random.default_rng(0)
    C = rng.standard_normal((8, 4, 4, 32 * 32))
    g = rng.standard_normal((8, 4, 4, 32 * 32))
    f = rng.standard_normal((256, 256))
    m, w = np.indices((7, 7)).reshape(2, -1).T - 3, rng.uniform(size=49)
    return {
        "pointwise_matvec 8x4x(4x4)x1024": lambda b: kernels.pointwise_matvec(C, g, backend=b),
        "direct_convolve 256^2, 49 taps": lambda b: kernels.direct_convolve(f, m, w, True, backend=b),
    }


def _family():
    spec = CoefficientSpec(2, 0.4, [CoefficientTerm(1.0, (0, 0), (0, 0))])
    spec.add_product(0.3, (1, 0), "sin", (0, 1), "sin")
    spec.add_product(0.3, (0, 1), "cos", (1, 0), "cos")
    return sample_coefficient(spec, PeriodicGrid(2, 8), PeriodicGrid(2, 32))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])
    print(f"default backend: {kernels.BACKEND}")
    for name, fn in _cases().items():
        times = {b: min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat))
                 for b in backends}
        line = "  ".join(f"{b} {1e3 * t:8.2f} ms" for b, t in times.items())
        if len(times) == 2:
            line += f"  speedup {times['python'] / times['cython']:.1f}x"
        print(f"{name:<34} {line}")
    coef = _family()
    t = min(timeit.repeat(lambda: solve_fast_family(coef), number=1, repeat=max(1, args.repeat // 2)))
    print(f"{'fast family Y=8, Z=32':<34} {kernels.BACKEND} {t:8.3f} s")


if __name__ == "__main__":
    main()
