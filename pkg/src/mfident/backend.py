"""Select the compiled kernels when available, else the NumPy fallback.

Set ``MFIDENT_PURE_PYTHON=1`` to force the fallback.
"""
import os

if os.environ.get("MFIDENT_PURE_PYTHON", "") not in ("", "0"):
    from . import _kernels_py as _impl
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        from . import _kernels_py as _impl
        BACKEND = "python"

muscl_flux = _impl.muscl_flux
pairwise_drift_power = _impl.pairwise_drift_power
pairwise_drift_table = _impl.pairwise_drift_table

__all__ = ["BACKEND", "muscl_flux", "pairwise_drift_power", "pairwise_drift_table"]
