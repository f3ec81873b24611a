"""Time the compiled and NumPy likelihood kernels on identical inputs.

    python benchmarks/bench_kernels.py --samples 100 --data 200 --dim 5

Each kernel is checked for agreement between backends before timing.
"""

import argparse
import timeit

import numpy as np

from ngvi.kernels import backends

KERNELS = {
    "logistic_grad_hess_sum": lambda k, x, z, y: k.logistic_grad_hess_sum(x, z, y),
    "logistic_loglik": lambda k, x, z, y: k.logistic_loglik(x, z, y),
    "student_grad_hess_sum": lambda k, x, z, y: k.student_grad_hess_sum(x, z, y, 3.0, 1.0),
    "student_loglik": lambda k, x, z, y: k.student_loglik(x, z, y, 3.0, 1.0),
}


def _agree(a, b):
    if isinstance(a, tuple):
        return all(np.allclose(u, v, rtol=1e-10, atol=1e-9) for u, v in zip(a, b))
    return np.allclose(a, b, rtol=1e-10, atol=1e-9)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--samples", type=int, nargs="+", default=[10, 100, 1000])
    parser.add_argument("--data", type=int, default=200)
    parser.add_argument("--dim", type=int, default=5)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    mods = backends()
    if "cython" not in mods:
        print("compiled backend unavailable; timing the NumPy backend only")
    rng = np.random.default_rng(args.seed)
    z = rng.standard_normal((args.data, args.dim))
    y_bin = (rng.uniform(size=args.data) < 0.5).astype(float)
    y_real = rng.standard_normal(args.data)

    print(f"{'kernel':<24}{'samples':>8}" + "".join(f"{name:>12}" for name in mods) + f"{'speedup':>10}")
    for name, fn in KERNELS.items():
        y = y_bin if name.startswith("logistic") else y_real
        for n in args.samples:
            x = rng.standard_normal((n, args.dim))
            results = {b: fn(m, x, z, y) for b, m in mods.items()}
            if "cython" in results and not _agree(results["python"], results["cython"]):
                raise SystemExit(f"{name}: backends disagree")
            times = {}
            for b, m in mods.items():
                number = max(1, int(2000 / n))
                t = min(timeit.repeat(lambda: fn(m, x, z, y), number=number, repeat=args.repeat)) / number
                times[b] = t
            speed = times["python"] / times["cython"] if "cython" in times else float("nan")
            cols = "".join(f"{times[b] * 1e3:>10.3f}ms" for b in mods)
            print(f"{name:<24}{n:>8}{cols}{speed:>9.1f}x")


if __name__ == "__main__":
    main()
