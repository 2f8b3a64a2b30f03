"""Trajectory-kernel backend selection.

The compiled Cython kernel is used when importable; the NumPy kernel is
the portable fallback.  ``HERALD_BACKEND`` overrides: ``cython``,
``numpy`` (alias ``python``) or ``auto``.
"""

from __future__ import annotations

import os

from .exceptions import ConfigError


def get_backend(choice: str | None = None):
    """Return the kernel module providing ``run_shard``."""
    if choice is None:
        choice = os.environ.get("HERALD_BACKEND", "auto")
    choice = choice.strip().lower() or "auto"
    if choice == "auto":
        try:
            from . import _kernels_cy
            return _kernels_cy
        except ImportError:
            from . import _kernels_py
            return _kernels_py
    if choice == "cython":
        from . import _kernels_cy
        return _kernels_cy
    if choice in ("numpy", "python"):
        from . import _kernels_py
        return _kernels_py
    raise ConfigError(
        f"unknown HERALD_BACKEND {choice!r} (expected auto, cython or numpy)")


def backend_name(choice: str | None = None) -> str:
    return get_backend(choice).BACKEND_NAME
