"""Kernel backend selection.

The compiled extension is preferred; the pure-Python kernel is the
fallback when the extension is unavailable. DIFFNET_BACKEND=python (or
=c) forces a choice; the two produce bit-identical trajectories, so the
switch only affects speed.
"""

from __future__ import annotations

import os

from ..errors import ConfigError


def load_kernel(name: str | None = None):
    """Return (module, backend_name) for the requested or default backend."""
    choice = (name or os.environ.get("DIFFNET_BACKEND", "auto")).strip().lower()
    if choice in ("c", "compiled", "ext"):
        from . import _ckernel
        return _ckernel, "c"
    if choice in ("py", "python", "pure"):
        from . import _pykernel
        return _pykernel, "python"
    if choice != "auto":
        raise ConfigError(f"unknown backend {choice!r}; use c, python, or auto")
    try:
        from . import _ckernel
        return _ckernel, "c"
    except ImportError:
        from . import _pykernel
        return _pykernel, "python"


_DEFAULT = load_kernel()


def default_backend_name() -> str:
    return _DEFAULT[1]


def default_kernel():
    return _DEFAULT[0]
