"""Backend selection for the hot loops.

The compiled extension is used when it imports; setting ``KPOLAB_PURE_PYTHON=1``
forces the NumPy fallback.
"""
from __future__ import annotations

import os

from . import _fallback

BACKEND = "python"
_impl = _fallback
if os.environ.get("KPOLAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _fallback

coherent_amplitudes = _impl.coherent_amplitudes
energy_batch = _impl.energy_batch

__all__ = ["BACKEND", "coherent_amplitudes", "energy_batch"]
