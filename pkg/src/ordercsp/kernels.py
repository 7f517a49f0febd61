"""Kernel backend selection: the compiled extension when built, else the Python fallback.

Set ORDERCSP_PURE=1 to force the fallback.
"""
from __future__ import annotations

import os

from . import _fallback

BACKEND = "python"
_impl = _fallback
if os.environ.get("ORDERCSP_PURE") != "1":
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _fallback


def get(name: str | None = None):
    """Return a backend module by name ("cython" or "python"), default the active one."""
    if name is None:
        return _impl
    if name == "python":
        return _fallback
    if name == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(name)


canonical_classes = _impl.canonical_classes
closure_masks = _impl.closure_masks
kpoly_float = _impl.kpoly_float
profile_float = _impl.profile_float
