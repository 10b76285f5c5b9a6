"""Kernel backend selection.

The numerically hot inner loops (network forward/jacobian/pullback over
collocation batches, PSOR sweeps) exist twice: a numba @njit implementation
and a pure-numpy fallback.  The active backend is chosen once per process
from the FOSLS_BACKEND environment variable:

  FOSLS_BACKEND=numba   force numba (error if unavailable)
  FOSLS_BACKEND=numpy   force the pure-numpy fallback
  unset                 numba if importable, else numpy

Both backends implement the same module-level interface; see
_kernels_numpy.py for the reference semantics.
"""

import os
import warnings

_ENV_VAR = "FOSLS_BACKEND"
_kernels = None
_name = None


def _resolve():
    global _kernels, _name
    if _kernels is not None:
        return
    choice = os.environ.get(_ENV_VAR, "").strip().lower()
    if choice not in ("", "numba", "numpy"):
        raise RuntimeError(f"{_ENV_VAR} must be 'numba' or 'numpy', got {choice!r}")
    if choice == "numpy":
        from . import _kernels_numpy as mod
        _kernels, _name = mod, "numpy"
        return
    try:
        with warnings.catch_warnings():
            # numba warns about an old TBB and falls back to another
            # threading layer; harmless for correctness
            warnings.filterwarnings("ignore", message=".*TBB.*")
            from . import _kernels_numba as mod
        _kernels, _name = mod, "numba"
    except ImportError as exc:
        if choice == "numba":
            raise RuntimeError(f"{_ENV_VAR}=numba requested but numba import failed: {exc}")
        warnings.warn(f"numba unavailable ({exc}); falling back to pure-numpy kernels")
        from . import _kernels_numpy as mod
        _kernels, _name = mod, "numpy"


def kernels():
    """Active kernel module."""
    _resolve()
    return _kernels


def backend_name():
    """Name of the active backend: 'numba' or 'numpy'."""
    _resolve()
    return _name
