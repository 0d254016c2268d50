"""Numba acceleration switch for the hot numeric kernels.

The inner loops that dominate training time (environment stepping, reward
evaluation, command generation, GAE scans and the scalar rotation math they
call) are written as plain Python functions over numpy arrays and compiled
with ``numba.njit`` at import time.  Setting ``LOCOMANIP_NUMBA=0`` in the
environment before import skips compilation entirely, so the exact same
functions run under the interpreter as a pure numpy/Python fallback.  The
fallback is much slower but numerically identical: kernels use explicit
loops and no fused-math options, so compiled and interpreted results agree
bit for bit (see tests/test_accel.py and benchmarks/bench_kernels.py).
"""

from __future__ import annotations

import os

NUMBA_ENV_VAR = "LOCOMANIP_NUMBA"

_FALSEY = {"0", "false", "off", "no"}


def _read_flag() -> bool:
    return os.environ.get(NUMBA_ENV_VAR, "1").strip().lower() not in _FALSEY


NUMBA_ENABLED = _read_flag()

if NUMBA_ENABLED:
    from numba import njit as _njit
else:
    _njit = None


def jit_kernel(func=None, **options):
    """Compile ``func`` with numba.njit unless LOCOMANIP_NUMBA=0.

    Used as ``@jit_kernel`` or ``@jit_kernel(inline="always")``.  Caching is
    on by default so repeated process startups reuse compiled artifacts.
    """

    def wrap(f):
        if not NUMBA_ENABLED:
            return f
        options.setdefault("cache", True)
        return _njit(**options)(f)

    if func is not None:
        return wrap(func)
    return wrap


def python_impl(kernel):
    """Return the uncompiled Python implementation behind a jitted kernel.

    When numba is disabled the kernel already is the Python implementation.
    """
    return getattr(kernel, "py_func", kernel)
