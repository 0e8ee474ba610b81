"""Compare the compiled kernels with the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import random
import timeit
from array import array

from chainprof import kernels


def workloads(rng):
    d = lambda values: array("d", values)
    xs = d(range(1, 33))
    ys = d(100.0 * min(x, 12) + rng.gauss(0, 5) for x in xs)
    sample = d(rng.gauss(50, 5) for _ in range(1000))
    n = 10_000
    cores = d(rng.randint(1, 8) for _ in range(n))
    times = d(rng.uniform(0.05, 1.0) for _ in range(n))
    mem = d([float("nan")] * n)
    draws = d(rng.gauss(0, 1) for _ in range(n))
    return {
        "mean_std(1000)": lambda impl: kernels.mean_std(sample, impl=impl),
        "linear_fit(32)": lambda impl: kernels.linear_fit(xs, ys, impl=impl),
        "plateau_fit(32)": lambda impl: kernels.plateau_fit(xs, ys, impl=impl),
        "sim_evaluate_many(10000)": lambda impl: kernels.sim_evaluate_many(
            100.0, 0.9, 4, True, 0.0, 0.05, cores, times, mem, draws, impl=impl),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    impls = kernels.implementations()
    if "cython" not in impls:
        print("compiled kernels not built; only the Python fallback is available")
    jobs = workloads(random.Random(0))
    header = f"{'kernel':<26}" + "".join(f"{name:>14}" for name in impls)
    print(header + (f"{'speedup':>10}" if "cython" in impls else ""))
    for label, job in jobs.items():
        best = {}
        for name, impl in impls.items():
            timer = timeit.Timer(lambda: job(impl))
            number, _ = timer.autorange()
            best[name] = min(timer.repeat(args.repeat, number)) / number
        row = f"{label:<26}" + "".join(f"{best[n] * 1e6:>12.1f}us" for n in impls)
        if "cython" in best:
            row += f"{best['python'] / best['cython']:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
