"""Kernel backend selection: compiled extension when built, numpy otherwise.

Set SKINRET_FORCE_NUMPY=1 to force the fallback (used by tests and the
benchmark to compare both implementations).
"""

from __future__ import annotations

import os

from . import _kernels_np

if os.environ.get("SKINRET_FORCE_NUMPY") == "1":
    _impl = _kernels_np
    COMPILED = False
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        COMPILED = True
    except ImportError:
        _impl = _kernels_np
        COMPILED = False

point_mesh_distances = _impl.point_mesh_distances
winding_numbers = _impl.winding_numbers
trilinear = _impl.trilinear


def backend_name() -> str:
    return "compiled" if COMPILED else "numpy"
