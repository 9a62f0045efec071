"""Backend selection for the per-point assembly kernels.

The compiled extension is used when it imports cleanly; setting the
environment variable ``LAPSHAPE_PURE=1`` forces the pure-Python twin.
Both expose ``triangulate``, ``vertex_areas`` and ``assemble_rows``.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _pykernels

STATUS_OK = _pykernels.STATUS_OK
STATUS_COLLINEAR = _pykernels.STATUS_COLLINEAR
STATUS_CENTER_DROPPED = _pykernels.STATUS_CENTER_DROPPED


def _load_compiled() -> ModuleType | None:
    try:
        from . import _ckernels
    except ImportError:
        return None
    return _ckernels


_compiled = _load_compiled()
_force_pure = os.environ.get("LAPSHAPE_PURE", "") == "1"
backend: ModuleType = _pykernels if (_force_pure or _compiled is None) else _compiled
BACKEND_NAME = "python" if backend is _pykernels else "compiled"


def get_backend(name: str | None = None) -> ModuleType:
    """Return a kernel module by name (``"compiled"``, ``"python"``) or the active one."""
    if name is None:
        return backend
    if name == "python":
        return _pykernels
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled kernels are not available")
        return _compiled
    raise ValueError(f"unknown kernel backend {name!r}")
