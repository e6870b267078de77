"""Kernel backend selection.

The compiled extension (``dcm._kernels``) is optional: source installs
without a C toolchain fall back to the numpy implementation with identical
semantics.  Set ``DCM_KERNEL_BACKEND=python`` or ``=compiled`` to force a
choice; forcing ``compiled`` when the extension is missing is an error.
"""

from __future__ import annotations

import os

from . import _kernels_py
from .errors import ConfigError

_ENV_VAR = "DCM_KERNEL_BACKEND"


def _load():
    choice = os.environ.get(_ENV_VAR, "").strip().lower()
    if choice not in ("", "python", "compiled", "auto"):
        raise ConfigError(f"{_ENV_VAR} must be 'python' or 'compiled', got {choice!r}")
    if choice == "python":
        return _kernels_py
    try:
        from . import _kernels  # type: ignore[attr-defined]
    except ImportError:
        if choice == "compiled":
            raise ConfigError(
                f"{_ENV_VAR}=compiled but the dcm._kernels extension is not built"
            ) from None
        return _kernels_py
    return _kernels


kernels = _load()


def kernel_backend() -> str:
    """Name of the active kernel backend: 'compiled' or 'python'."""
    return kernels.BACKEND_NAME
