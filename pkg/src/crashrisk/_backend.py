"""Pick the concentration kernel at import time.

Set ``CRASHRISK_PURE_PYTHON=1`` to force the numpy fallback.
"""
import os

from . import _concentrate_py

BACKEND = "python"
concentrate_1d = _concentrate_py.concentrate_1d

if not os.environ.get("CRASHRISK_PURE_PYTHON"):
    try:
        from . import _concentrate
    except ImportError:
        pass
    else:
        BACKEND = "compiled"
        concentrate_1d = _concentrate.concentrate_1d


def get_kernel(name=None):
    """Return the kernel for ``name`` ('compiled' or 'python'); default is the active one."""
    if name is None:
        return concentrate_1d
    if name == "python":
        return _concentrate_py.concentrate_1d
    if name == "compiled":
        from . import _concentrate
        return _concentrate.concentrate_1d
    raise ValueError(f"unknown backend {name!r}")
