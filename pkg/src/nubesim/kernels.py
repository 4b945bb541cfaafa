"""Counting kernels, compiled when available.

Set ``NUBESIM_PURE=1`` before import to force the numpy fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if not os.environ.get("NUBESIM_PURE"):
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

pair_counts = _impl.pair_counts
neighbor_counts = _impl.neighbor_counts
count_embeddings = _impl.count_embeddings
triangle_counts = _impl.triangle_counts

__all__ = [
    "BACKEND",
    "pair_counts",
    "neighbor_counts",
    "count_embeddings",
    "triangle_counts",
]
