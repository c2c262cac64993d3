"""Hot reduction kernels with a numba fast path and a pure-numpy fallback.

The Monte-Carlo estimators spend nearly all their time reducing large blocks
of draws group-by-group (max over the m copies of a draw set, min over the q
copies, running max for shared-randomness comparisons).  Those reductions live
here in two interchangeable implementations:

* ``numba_backend`` -- ``@njit`` loops, no intermediate allocations;
* ``numpy_backend`` -- reshape/ufunc reductions, always available.

The active backend is chosen once at import from the ``MAXUP_LAB_BACKEND``
environment variable (``numba``, ``numpy``, or ``auto``; default ``auto``
prefers numba when it imports).  ``group_max``/``group_min`` return bitwise
identical results on both backends (max of the same floats does not depend on
loop form); the moment accumulators agree to summation-order rounding.
``benchmarks/backend_bench.py`` times one against the other.
"""

from __future__ import annotations

import os

from . import numpy_backend

try:
    from . import numba_backend
    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba_backend = None
    _HAVE_NUMBA = False

_active = None
_active_name = ""


def available_backends():
    names = ["numpy"]
    if _HAVE_NUMBA:
        names.append("numba")
    return names


def set_backend(name: str) -> None:
    """Select the kernel implementation: 'numba', 'numpy', or 'auto'."""
    global _active, _active_name
    name = name.lower()
    if name == "auto":
        name = "numba" if _HAVE_NUMBA else "numpy"
    if name == "numpy":
        _active, _active_name = numpy_backend, "numpy"
    elif name == "numba":
        if not _HAVE_NUMBA:
            raise RuntimeError("MAXUP_LAB_BACKEND=numba but numba is not importable")
        _active, _active_name = numba_backend, "numba"
    else:
        raise ValueError(f"unknown backend {name!r}; choose numba, numpy, or auto")


def active_backend() -> str:
    return _active_name


set_backend(os.environ.get("MAXUP_LAB_BACKEND", "auto"))


def group_max(values, group_size):
    """Per-group maxima of a flat array split into consecutive groups."""
    return _active.group_max(values, group_size)


def group_min(values, group_size):
    """Per-group minima of a flat array split into consecutive groups."""
    return _active.group_min(values, group_size)


def prefix_max_moments(values, group_size):
    """Sums and sums-of-squares of running maxima within each group.

    Returns ``(sums, sumsqs)`` of length ``group_size`` where ``sums[j]``
    accumulates, over all groups, the max of the first ``j+1`` entries.
    Used for comparing expected maxima across copy counts at shared draws.
    """
    return _active.prefix_max_moments(values, group_size)
