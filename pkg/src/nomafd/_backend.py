"""Kernel selection: compiled core when available, numpy otherwise.

Set ``NOMAFD_PURE_PYTHON=1`` to force the numpy kernels.
"""

import os

from . import _pycore

try:
    if os.environ.get("NOMAFD_PURE_PYTHON"):
        raise ImportError("numpy kernels forced by NOMAFD_PURE_PYTHON")
    from . import _core as kernels

    BACKEND = "compiled"
except ImportError:
    kernels = _pycore
    BACKEND = "numpy"


def get_kernels(name: str | None = None):
    """Return the kernel module for ``name`` (``"compiled"``/``"numpy"``), default active."""
    if name is None:
        return kernels
    if name == "numpy":
        return _pycore
    if name == "compiled":
        from . import _core

        return _core
    raise ValueError(f"unknown backend {name!r}")


def has_compiled() -> bool:
    try:
        from . import _core  # noqa: F401
    except ImportError:
        return False
    return True
