"""Kernel dispatch: compiled extension when importable, numpy otherwise.

Set ``REISTOKES_PURE=1`` to force the numpy path.
"""
import os

import numpy as np

from . import _fallback

BACKEND = "python"
_impl = _fallback
if os.environ.get("REISTOKES_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _fallback


def pointwise_matvec(C, g, backend=None):
    """Batched per-point matrix-vector product.

    C has shape (Ba, R, R, P) and g shape (Ba, Bg, R, P); returns (Ba, Bg, R, P).
    """
    impl = _select(backend)
    C = np.ascontiguousarray(C, dtype=np.float64)
    g = np.ascontiguousarray(g, dtype=np.float64)
    return impl.pointwise_matvec(C, g)


def direct_convolve(f, offsets, weights, periodic=True, backend=None):
    impl = _select(backend)
    f = np.ascontiguousarray(f, dtype=np.float64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    if impl is not _fallback:
        offsets = offsets.astype(np.dtype("l"), copy=False)
    return impl.direct_convolve(f, offsets, weights, bool(periodic))


def _select(backend):
    if backend is None:
        return _impl
    if backend == "python":
        return _fallback
    if backend == "cython":
        if BACKEND != "cython":
            raise ImportError("compiled kernels are not available")
        return _impl
    raise ValueError(f"unknown backend {backend!r}")
