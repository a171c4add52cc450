"""Kernel backend selection.

The compiled ``sclab._kernels`` extension is used when importable; the
pure-Python twin in ``sclab._kernels_py`` is the fallback. Set
``SCLAB_BACKEND=python`` to force the fallback.
"""
from __future__ import annotations

import os
from types import ModuleType

from sclab import _kernels_py

try:
    from sclab import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None


def available() -> list[str]:
    names = ["python"]
    if _compiled is not None:
        names.insert(0, "compiled")
    return names


def get(name: str | None = None) -> ModuleType:
    """Return the kernel module called ``name`` (default: the active one)."""
    if name is None:
        return kernels
    if name == "python":
        return _kernels_py
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .`")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def _select() -> ModuleType:
    forced = os.environ.get("SCLAB_BACKEND", "").strip().lower()
    if forced:
        return get(forced)
    return _compiled if _compiled is not None else _kernels_py


kernels = _select()
NAME = "compiled" if kernels is _compiled else "python"
