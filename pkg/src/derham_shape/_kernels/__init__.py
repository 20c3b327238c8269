"""Element kernels: compiled extension when available, numpy otherwise.

Set ``DERHAM_SHAPE_PURE=1`` to force the numpy implementation.
"""

import os

from . import fallback

BACKEND = "numpy"
_impl = fallback

if os.environ.get("DERHAM_SHAPE_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _whitney_ext as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = fallback


def get_backend(name=None):
    """Kernel module by name (``"cython"`` or ``"numpy"``); default is the active one."""
    if name is None:
        return _impl
    if name == "numpy":
        return fallback
    if name == "cython":
        from . import _whitney_ext

        return _whitney_ext
    raise ValueError(f"unknown kernel backend {name!r}")


local_mass_0 = _impl.local_mass_0
local_mass_1 = _impl.local_mass_1
local_mass_2 = _impl.local_mass_2
local_mass_3 = _impl.local_mass_3

__all__ = ["BACKEND", "get_backend", "local_mass_0", "local_mass_1", "local_mass_2", "local_mass_3"]
