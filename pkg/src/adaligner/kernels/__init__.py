"""Hot batch kernels with a compiled core and a numpy fallback.

The compiled extension ``_fast`` is used when it imports; otherwise (or when
``ADALIGNER_PURE_PYTHON=1`` is set) the numpy implementations in
``_reference`` are used. Both expose the same five functions.
"""
from __future__ import annotations

import os

from . import _reference

if os.environ.get("ADALIGNER_PURE_PYTHON", "") not in ("", "0"):
    _impl = _reference
else:
    try:
        from . import _fast as _impl  # type: ignore[attr-defined]
    except ImportError:  # extension not built
        _impl = _reference

BACKEND: str = _impl.BACKEND

softmax_rows = _impl.softmax_rows
clip_loss_grad = _impl.clip_loss_grad
soft_loss_grad = _impl.soft_loss_grad
sample_without_replacement = _impl.sample_without_replacement
pairwise_auc = _impl.pairwise_auc


def compiled_available() -> bool:
    try:
        from . import _fast  # noqa: F401
    except ImportError:
        return False
    return True


__all__ = [
    "BACKEND",
    "softmax_rows",
    "clip_loss_grad",
    "soft_loss_grad",
    "sample_without_replacement",
    "pairwise_auc",
    "compiled_available",
]
