"""Kernel backend selection.

The compiled extension is used when it imports; setting the environment
variable ``MDPCG_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

from mdpcg import _kernels_py

BACKEND = "python"
relative_value_iteration = _kernels_py.relative_value_iteration
stationary_power = _kernels_py.stationary_power

if os.environ.get("MDPCG_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from mdpcg import _ckernels
    except ImportError:
        pass
    else:
        BACKEND = "cython"
        relative_value_iteration = _ckernels.relative_value_iteration
        stationary_power = _ckernels.stationary_power


def backends():
    """Mapping of available backend name -> kernel module."""
    out = {"python": _kernels_py}
    try:
        from mdpcg import _ckernels
    except ImportError:
        return out
    out["cython"] = _ckernels
    return out
