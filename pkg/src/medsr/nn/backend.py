"""Kernel backend selection.

The 3x3 convolution forward/backward kernels dominate training and
inference time. Two interchangeable implementations exist:

* ``medsr.nn.kernels_numba`` -- numba ``@njit(parallel=True)`` loops,
* ``medsr.nn.kernels_numpy`` -- pure numpy (9 shifted BLAS matmuls).

The active one is chosen once at import time from the ``MEDSR_BACKEND``
environment variable: ``auto`` (default, numba when importable), ``numba``
or ``numpy``. Both backends produce the same values up to floating-point
summation order; within one backend results are bit-deterministic and
independent of the number of threads.
"""

from __future__ import annotations

import os

from . import kernels_numpy

_CHOICES = ("auto", "numba", "numpy")


def _select(name: str):
    if name not in _CHOICES:
        raise ValueError(f"MEDSR_BACKEND must be one of {_CHOICES}, got {name!r}")
    if name == "numpy":
        return kernels_numpy, "numpy"
    try:
        from . import kernels_numba

        return kernels_numba, "numba"
    except ImportError:
        if name == "numba":
            raise
        return kernels_numpy, "numpy"


_impl, _name = _select(os.environ.get("MEDSR_BACKEND", "auto").lower())

conv3x3_forward = _impl.conv3x3_forward
conv3x3_backward = _impl.conv3x3_backward


def backend_name() -> str:
    """Name of the active kernel backend ("numba" or "numpy")."""
    return _name
