"""Pure-Python numeric kernels.

Reference implementation of the routines in ``_ckernels.pyx``. Both follow
the same operation order so results agree to the last bit on IEEE doubles.
"""
import math


def mean_std(values):
    """Arithmetic mean and sample standard deviation (two-pass)."""
    n = len(values)
    s = 0.0
    for v in values:
        s += v
    mean = s / n
    if n < 2:
        return mean, 0.0
    ss = 0.0
    for v in values:
        d = v - mean
        ss += d * d
    return mean, math.sqrt(ss / (n - 1))


def log_mean(values):
    s = 0.0
    for v in values:
        s += math.log(v)
    return s / len(values)


def _ols(z, y):
    n = len(z)
    zs = 0.0
    ys = 0.0
    for i in range(n):
        zs += z[i]
        ys += y[i]
    zm = zs / n
    ym = ys / n
    sxx = 0.0
    sxy = 0.0
    for i in range(n):
        dz = z[i] - zm
        sxx += dz * dz
        sxy += dz * (y[i] - ym)
    b = sxy / sxx if sxx > 0.0 else 0.0
    a = ym - b * zm
    sse = 0.0
    for i in range(n):
        r = y[i] - (a + b * z[i])
        sse += r * r
    return a, b, sse


def constant_fit(y):
    n = len(y)
    s = 0.0
    for v in y:
        s += v
    a = s / n
    sse = 0.0
    for v in y:
        r = v - a
        sse += r * r
    return a, sse


def linear_fit(x, y):
    """Ordinary least squares ``y = a + b x``; returns (a, b, sse)."""
    return _ols(x, y)


def plateau_fit(x, y):
    """Best ``y = a + b min(x, k)`` over knees k at interior x values.

    ``x`` must be sorted ascending. Interior means strictly between the
    smallest and largest x. Returns (a, b, k, sse); ties keep the lowest k.
    Returns None when there is no interior x value.
    """
    n = len(x)
    lo = x[0]
    hi = x[n - 1]
    best = None
    prev = None
    z = [0.0] * n
    for j in range(n):
        k = x[j]
        if k <= lo or k >= hi or k == prev:
            continue
        prev = k
        for i in range(n):
            z[i] = x[i] if x[i] < k else k
        a, b, sse = _ols(z, y)
        if best is None or sse < best[3]:
            best = (a, b, k, sse)
    return best


def sim_evaluate(base_rate, parallel_fraction, max_threads, cpu_bound, mem_floor_mb,
                 noise_std, cores, cpu_time, mem_max, noise_draw):
    """Synthetic VNF output under limits.

    ``mem_max`` is NaN when unlimited. Amdahl speedup over
    ``min(cores, max_threads)`` threads scaled by the CPU-time share; output
    drops to zero below the memory floor.
    """
    if cpu_bound:
        t = cores if cores < max_threads else max_threads
        speedup = 1.0 / ((1.0 - parallel_fraction) + parallel_fraction / t)
        raw = base_rate * cpu_time * speedup
    else:
        raw = base_rate
    if mem_max == mem_max and mem_max < mem_floor_mb:
        raw = 0.0
    out = raw * (1.0 + noise_std * noise_draw)
    return out if out > 0.0 else 0.0


def sim_evaluate_many(base_rate, parallel_fraction, max_threads, cpu_bound, mem_floor_mb,
                      noise_std, cores, cpu_time, mem_max, draws):
    return [sim_evaluate(base_rate, parallel_fraction, max_threads, cpu_bound, mem_floor_mb,
                         noise_std, cores[i], cpu_time[i], mem_max[i], draws[i])
            for i in range(len(draws))]
