"""Backend selection for the hot kernels.

The compiled extension (`bustree._kernels`, Cython) is preferred when it
imported cleanly; the NumPy module is the fallback. Override with
BUSTREE_KERNELS=auto|compiled|python.
"""

from __future__ import annotations

import os

from . import _kernels_py

_choice = os.environ.get("BUSTREE_KERNELS", "auto").lower()
if _choice not in ("auto", "compiled", "python"):
    raise ValueError(f"BUSTREE_KERNELS must be auto, compiled, or python (got {_choice!r})")

_impl = None
if _choice in ("auto", "compiled"):
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        if _choice == "compiled":
            raise ImportError(
                "BUSTREE_KERNELS=compiled but the bustree._kernels extension is not built")
if _impl is None:
    _impl = _kernels_py

BACKEND: str = _impl.BACKEND
select_topk = _impl.select_topk
dcg_scatter = _impl.dcg_scatter


def available_backends() -> list[str]:
    out = ["python"]
    try:
        from . import _kernels  # noqa: F401
        out.insert(0, "compiled")
    except ImportError:
        pass
    return out
