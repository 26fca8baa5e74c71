"""Backend selection for hot kernels.

Every performance-critical kernel in this package exists twice: a numba
@njit loop implementation and a vectorized pure-numpy implementation.
Selection happens once at import time via the FINITEKIN_NUMBA environment
variable ("0"/"false"/"off" forces the numpy path); a missing numba install
falls back to numpy silently.  `benchmarks/bench_kernels.py` times the two
paths against each other.
"""

from __future__ import annotations

import os

_flag = os.environ.get("FINITEKIN_NUMBA", "1").strip().lower()
WANT_NUMBA = _flag not in ("0", "false", "no", "off")

try:
    import numba  # noqa: F401
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - environment without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):  # type: ignore[misc]
        """Placeholder decorator so modules can be imported without numba."""

        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


USE_NUMBA = WANT_NUMBA and HAVE_NUMBA


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
