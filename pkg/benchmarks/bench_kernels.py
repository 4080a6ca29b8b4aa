"""Compare the compiled and NumPy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Times the objective/gradient/Hessian sum at the default optimizer grid
(S=64, T=128) for a 33-antenna layout and the pool-adjacent-violators pass.
"""

import argparse
import timeit

import numpy as np

from nfsparse import kernels
from nfsparse.optimizer import DEFAULT_S, DEFAULT_T, build_diff_grid, random_init

LAM = 0.01


def _time(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--n", type=int, default=33)
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    grid = build_diff_grid(DEFAULT_S, DEFAULT_T, 0.05)
    rng = np.random.default_rng(0)
    x = random_init(rng, args.n, 10 * (args.n - 1) * LAM / 2, LAM)
    y = rng.normal(size=args.n)
    b, th, w = grid.b_samples, grid.theta_samples, grid.weights

    cases = {
        f"terms order 0 (N={args.n})": lambda m: (lambda: m.interference_terms(x, b, th, w, LAM, 0), 20),
        f"terms order 1 (N={args.n})": lambda m: (lambda: m.interference_terms(x, b, th, w, LAM, 1), 10),
        f"terms order 2 (N={args.n})": lambda m: (lambda: m.interference_terms(x, b, th, w, LAM, 2), 5),
        f"PAV (N={args.n})": lambda m: (lambda: m.pav_nondecreasing(y), 2000),
    }
    names = sorted(backends)
    both = names == ["cython", "python"]
    print(f"{'case':<24}" + "".join(f"{n:>14}" for n in names) + ("   speedup" if both else ""))
    for label, make in cases.items():
        times = {}
        for name in names:
            fn, number = make(backends[name])
            times[name] = _time(fn, args.repeat, number)
        row = f"{label:<24}" + "".join(f"{times[n] * 1e3:>11.3f} ms" for n in names)
        if both:
            row += f"   {times['python'] / times['cython']:>6.1f}x"
        print(row)
    if "cython" not in backends:
        print("compiled extension not built; only the NumPy backend was timed")


if __name__ == "__main__":
    main()
