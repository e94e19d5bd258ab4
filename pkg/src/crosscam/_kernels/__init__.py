"""Kernel dispatch: compiled extension when available, numpy fallback otherwise.

Set ``CROSSCAM_PURE_KERNELS=1`` to force the fallback (used by the
benchmark and the backend-parity tests).
"""

import importlib
import os

import numpy as np

from crosscam._kernels import pure as _pure

_native = None
if not os.environ.get("CROSSCAM_PURE_KERNELS"):
    try:
        _native = importlib.import_module("crosscam._kernels._native")
    except ImportError:
        _native = None

_impl = _native if _native is not None else _pure


def backend() -> str:
    """Name of the active backend: 'native' or 'pure'."""
    return _impl.BACKEND


def _as_plane(x) -> np.ndarray:
    arr = np.ascontiguousarray(x, dtype=np.uint8)
    if arr.ndim != 2:
        raise ValueError("expected a 2-D uint8 array")
    return arr


def ssim(a, b, window: int = 8) -> float:
    a = _as_plane(a)
    b = _as_plane(b)
    if _impl is _pure:
        return _pure.ssim(a, b, window)
    h, w = a.shape
    return _impl.ssim(a.reshape(-1), b.reshape(-1), w, h, window)


def nmse(a, b) -> float:
    a = _as_plane(a)
    b = _as_plane(b)
    if _impl is _pure:
        return _pure.nmse(a, b)
    return _impl.nmse(a.reshape(-1), b.reshape(-1))


def rle_encode(data) -> bytes:
    if _impl is _pure:
        return _pure.rle_encode(data)
    if isinstance(data, np.ndarray):
        data = np.ascontiguousarray(data, dtype=np.uint8).reshape(-1)
    else:
        data = np.frombuffer(bytes(data), dtype=np.uint8)
    return _impl.rle_encode(data)


def rle_decode(payload: bytes, out_len: int) -> bytes:
    if _impl is _pure:
        return _pure.rle_decode(payload, out_len)
    return _impl.rle_decode(np.frombuffer(bytes(payload), dtype=np.uint8), out_len)
