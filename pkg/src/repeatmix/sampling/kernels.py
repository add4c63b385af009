"""Kernel backend selection.

The compiled extension is preferred when importable; set ``REPEATMIX_NO_EXT=1``
to force the pure-Python kernels (used by the benchmark to compare both).
"""

from __future__ import annotations

import os

from . import _kernels_py

_backends = {"python": _kernels_py}

try:
    from .. import _speedups  # type: ignore[attr-defined]

    _backends["cython"] = _speedups
except ImportError:
    _speedups = None

if os.environ.get("REPEATMIX_NO_EXT", "0") not in ("", "0"):
    active_name = "python"
elif _speedups is not None:
    active_name = "cython"
else:
    active_name = "python"

active = _backends[active_name]


def available_backends() -> list[str]:
    return sorted(_backends)


def get_backend(name: str):
    return _backends[name]
