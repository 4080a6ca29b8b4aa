"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the NumPy
fallback is used. Set ``NFSPARSE_PURE_PYTHON=1`` to force the fallback.
"""

import os

import numpy as np

from . import _pykernels

python_backend = _pykernels

try:
    if os.environ.get("NFSPARSE_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-Python kernels requested")
    from . import _kernels as compiled_backend
except ImportError:
    compiled_backend = None

_active = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if _active is compiled_backend else "python"


def available_backends() -> dict:
    out = {"python": python_backend}
    if compiled_backend is not None:
        out["cython"] = compiled_backend
    return out


def _c(a):
    return np.ascontiguousarray(a, dtype=float)


def interference_terms(x, b, theta, w, wavelength, order=2):
    return _active.interference_terms(_c(x), _c(b), _c(theta), _c(w), float(wavelength), order)


def pav_nondecreasing(y):
    return _active.pav_nondecreasing(_c(y))
