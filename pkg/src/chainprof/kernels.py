"""Numeric hot paths, compiled when available.

The Cython extension ``chainprof._ckernels`` is used when it was built;
otherwise the pure-Python twin in ``chainprof._pykernels`` is used. Set
``CHAINPROF_PURE_PYTHON=1`` to force the fallback.
"""
import os
from array import array

from chainprof import _pykernels

try:
    if os.environ.get("CHAINPROF_PURE_PYTHON"):
        raise ImportError("pure Python requested")
    from chainprof import _ckernels as _impl
    BACKEND = "cython"
except ImportError:
    _impl = _pykernels
    BACKEND = "python"


def mean_std(values, impl=None):
    impl = impl or _impl
    return impl.mean_std(_as(values, impl))


def log_mean(values, impl=None):
    impl = impl or _impl
    return impl.log_mean(_as(values, impl))


def constant_fit(y, impl=None):
    impl = impl or _impl
    return impl.constant_fit(_as(y, impl))


def linear_fit(x, y, impl=None):
    impl = impl or _impl
    return impl.linear_fit(_as(x, impl), _as(y, impl))


def plateau_fit(x, y, impl=None):
    impl = impl or _impl
    return impl.plateau_fit(_as(x, impl), _as(y, impl))


def sim_evaluate(*args, impl=None):
    impl = impl or _impl
    return impl.sim_evaluate(*args)


def sim_evaluate_many(base_rate, parallel_fraction, max_threads, cpu_bound, mem_floor_mb,
                      noise_std, cores, cpu_time, mem_max, draws, impl=None):
    impl = impl or _impl
    return impl.sim_evaluate_many(base_rate, parallel_fraction, max_threads, cpu_bound,
                                  mem_floor_mb, noise_std, _as(cores, impl), _as(cpu_time, impl),
                                  _as(mem_max, impl), _as(draws, impl))


def _as(values, impl):
    if impl is _pykernels:
        return values if isinstance(values, (list, tuple, array)) else list(values)
    if isinstance(values, array) and values.typecode == "d":
        return values
    return array("d", values)


def implementations():
    """All importable implementations, keyed by name (for tests and benchmarks)."""
    impls = {"python": _pykernels}
    try:
        from chainprof import _ckernels
        impls["cython"] = _ckernels
    except ImportError:
        pass
    return impls
