"""Backend selection for the TS-FIS hot loops.

The compiled extension is used when it was built; otherwise the NumPy
implementation is imported. Set ``IMINER_PURE_PYTHON=1`` to force the
fallback (handy for benchmarking and for cross-checking the two).
"""

from __future__ import annotations

import os

from . import _kernels_py

MEMBERSHIP_FLOOR = _kernels_py.MEMBERSHIP_FLOOR

compiled = None
if os.environ.get("IMINER_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as compiled  # type: ignore[no-redef]
    except ImportError:  # extension not built
        compiled = None

if compiled is not None:
    fis_forward = compiled.fis_forward
    fis_gradients = compiled.fis_gradients
    BACKEND = "cython"
else:
    fis_forward = _kernels_py.fis_forward
    fis_gradients = _kernels_py.fis_gradients
    BACKEND = "numpy"

__all__ = ["BACKEND", "MEMBERSHIP_FLOOR", "fis_forward", "fis_gradients"]
