# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled numeric kernels; mirrors chainprof._pykernels operation by operation."""
from libc.math cimport sqrt, log


def mean_std(double[::1] values):
    cdef Py_ssize_t i, n = values.shape[0]
    cdef double s = 0.0, mean, ss = 0.0, d
    for i in range(n):
        s += values[i]
    mean = s / n
    if n < 2:
        return mean, 0.0
    for i in range(n):
        d = values[i] - mean
        ss += d * d
    return mean, sqrt(ss / (n - 1))


def log_mean(double[::1] values):
    cdef Py_ssize_t i, n = values.shape[0]
    cdef double s = 0.0
    for i in range(n):
        s += log(values[i])
    return s / n


cdef void _ols(double* z, double[::1] y, Py_ssize_t n,
               double* a_out, double* b_out, double* sse_out) noexcept nogil:
    cdef Py_ssize_t i
    cdef double zs = 0.0, ys = 0.0, zm, ym, sxx = 0.0, sxy = 0.0, dz, b, a, sse = 0.0, r
    for i in range(n):
        zs += z[i]
        ys += y[i]
    zm = zs / n
    ym = ys / n
    for i in range(n):
        dz = z[i] - zm
        sxx += dz * dz
        sxy += dz * (y[i] - ym)
    b = sxy / sxx if sxx > 0.0 else 0.0
    a = ym - b * zm
    for i in range(n):
        r = y[i] - (a + b * z[i])
        sse += r * r
    a_out[0] = a
    b_out[0] = b
    sse_out[0] = sse


def constant_fit(double[::1] y):
    cdef Py_ssize_t i, n = y.shape[0]
    cdef double s = 0.0, a, sse = 0.0, r
    for i in range(n):
        s += y[i]
    a = s / n
    for i in range(n):
        r = y[i] - a
        sse += r * r
    return a, sse


def linear_fit(double[::1] x, double[::1] y):
    cdef double a, b, sse
    _ols(&x[0], y, x.shape[0], &a, &b, &sse)
    return a, b, sse


def plateau_fit(double[::1] x, double[::1] y):
    cdef Py_ssize_t i, j, n = x.shape[0]
    cdef double lo = x[0], hi = x[n - 1], k, a, b, sse
    cdef double best_a = 0.0, best_b = 0.0, best_k = 0.0, best_sse = 0.0, prev = 0.0
    cdef bint found = False, has_prev = False
    cdef double[::1] z = x.copy()
    for j in range(n):
        k = x[j]
        if k <= lo or k >= hi or (has_prev and k == prev):
            continue
        prev = k
        has_prev = True
        for i in range(n):
            z[i] = x[i] if x[i] < k else k
        _ols(&z[0], y, n, &a, &b, &sse)
        if not found or sse < best_sse:
            best_a, best_b, best_k, best_sse = a, b, k, sse
            found = True
    if not found:
        return None
    return best_a, best_b, best_k, best_sse


cdef inline double _sim(double base_rate, double p, double max_threads, bint cpu_bound,
                        double mem_floor, double noise_std, double cores, double cpu_time,
                        double mem_max, double draw) noexcept nogil:
    cdef double t, speedup, raw, out
    if cpu_bound:
        t = cores if cores < max_threads else max_threads
        speedup = 1.0 / ((1.0 - p) + p / t)
        raw = base_rate * cpu_time * speedup
    else:
        raw = base_rate
    if mem_max == mem_max and mem_max < mem_floor:
        raw = 0.0
    out = raw * (1.0 + noise_std * draw)
    return out if out > 0.0 else 0.0


def sim_evaluate(double base_rate, double parallel_fraction, double max_threads, bint cpu_bound,
                 double mem_floor_mb, double noise_std, double cores, double cpu_time,
                 double mem_max, double noise_draw):
    return _sim(base_rate, parallel_fraction, max_threads, cpu_bound, mem_floor_mb, noise_std,
                cores, cpu_time, mem_max, noise_draw)


def sim_evaluate_many(double base_rate, double parallel_fraction, double max_threads,
                      bint cpu_bound, double mem_floor_mb, double noise_std,
                      double[::1] cores, double[::1] cpu_time, double[::1] mem_max,
                      double[::1] draws):
    cdef Py_ssize_t i, n = draws.shape[0]
    out = [0.0] * n
    for i in range(n):
        out[i] = _sim(base_rate, parallel_fraction, max_threads, cpu_bound, mem_floor_mb,
                      noise_std, cores[i], cpu_time[i], mem_max[i], draws[i])
    return out
