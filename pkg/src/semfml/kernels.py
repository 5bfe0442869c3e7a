"""Hot numerical kernels with a compiled backend and a pure-Python fallback.

The Cython extension is used when it imports; set ``SEMFML_PURE_PYTHON=1``
to force the fallback. ``BACKEND`` names the active implementation.
"""
import os

from . import _kernels_py

if os.environ.get("SEMFML_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = "cython" if _impl is not _kernels_py else "python"

linear_assignment = _impl.linear_assignment
bisect_qhat = _impl.bisect_qhat
qhat_excess = _impl.qhat_excess
sp1_candidates = _impl.sp1_candidates


def backends():
    """Every importable backend module, keyed by name."""
    found = {"python": _kernels_py}
    try:
        from . import _kernels
        found["cython"] = _kernels
    except ImportError:
        pass
    return found
