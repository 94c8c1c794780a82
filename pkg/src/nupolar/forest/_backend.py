"""Growth-kernel backend selection.

The compiled extension is used when importable; otherwise the pure-Python
twin takes over transparently.  ``NUPOLAR_BACKEND=python|cython`` (read at
import) forces a choice, and every public forest function also accepts an
explicit ``backend=`` argument -- the benchmark and the cross-backend
tests rely on that.
"""
from __future__ import annotations

import os

from . import _grow_py

try:
    from . import _grow_cy
except ImportError:          # extension not built; fall back
    _grow_cy = None

_FORCED = os.environ.get("NUPOLAR_BACKEND", "").strip().lower() or None


def cython_available() -> bool:
    return _grow_cy is not None


def get_backend(name: str | None = None):
    """Kernel module for ``name`` (None = forced env choice or best available)."""
    if name is None:
        name = _FORCED
    if name is None:
        return _grow_cy if _grow_cy is not None else _grow_py
    if name == "python":
        return _grow_py
    if name == "cython":
        if _grow_cy is None:
            raise RuntimeError(
                "compiled backend requested but nupolar.forest._grow_cy is not built"
            )
        return _grow_cy
    raise ValueError(f"unknown backend {name!r} (expected 'python' or 'cython')")


def active_backend_name() -> str:
    return "cython" if get_backend() is _grow_cy and _grow_cy is not None else "python"
