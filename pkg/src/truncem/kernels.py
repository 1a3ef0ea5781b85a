"""Backend selection for the hot stepping loop.

The compiled ``_ckernels`` extension is used when it imported and the problem
names a built-in kernel; everything else runs the numpy loop.  Setting
``TRUNCEM_PURE_PYTHON=1`` before import forces the numpy loop everywhere.
"""

import os

import numpy as np

from . import _pykernels

try:
    if os.environ.get("TRUNCEM_PURE_PYTHON", "").strip() not in ("", "0"):
        raise ImportError("compiled kernels disabled by TRUNCEM_PURE_PYTHON")
    from . import _ckernels
except ImportError:
    _ckernels = None

BACKEND = "cython" if _ckernels is not None else "python"


def compiled_available():
    return _ckernels is not None


def resolve(problem, backend=None):
    """Name of the backend that would run ``problem``."""
    backend = backend or BACKEND
    if backend == "cython":
        if _ckernels is None:
            raise RuntimeError("compiled kernels are not available")
        if problem.kernel is None:
            return "python"
    return backend


def advance(problem, x, dW, t0, dt, k_start, h, radius,
            record_idx=None, recorded=None, traj=None, backend=None):
    """Advance the rows of ``x`` in place; see ``_pykernels.advance``."""
    h = np.ascontiguousarray(h, dtype=np.float64)
    if resolve(problem, backend) == "cython":
        name, params = problem.kernel
        if record_idx is not None:
            record_idx = np.ascontiguousarray(record_idx, dtype=np.int64)
        _ckernels.advance(name, params, x, np.ascontiguousarray(dW), float(t0), float(dt),
                          int(k_start), h, float(radius), record_idx, recorded, traj)
        return x
    return _pykernels.advance(problem, x, dW, t0, dt, k_start, h, radius,
                              record_idx, recorded, traj)
