"""Hot numeric kernels with a compiled core and a pure-numpy fallback.

The compiled extension (`._fast`, Cython) is preferred when importable;
setting HIDENAV_PURE=1 forces the numpy backend. Batched 3x3 convolutions
are routed to the numpy/BLAS path above a size threshold where im2col+matmul
beats plain loops (see benchmarks/bench_kernels.py).
"""
import os

import numpy as np

from . import _ref

if os.environ.get("HIDENAV_PURE"):
    _fast = None
else:
    try:
        from . import _fast  # type: ignore[attr-defined]
    except ImportError:
        _fast = None

BACKEND = "ref" if _fast is None else "fast"

# b*c*o*h*w above which im2col+BLAS wins over the compiled loop
_CONV_LOOP_MAX = 200_000


def _c(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    if not a.flags.writeable:  # the compiled memoryviews reject read-only buffers
        a = a.copy()
    return a


def conv3x3(x, k):
    x, k = _c(x), _c(k)
    if _fast is not None:
        b, c, h, w = x.shape
        if b * c * k.shape[0] * h * w <= _CONV_LOOP_MAX:
            return _fast.conv3x3(x, k)
    return _ref.conv3x3(x, k)


def conv3x3_grad_input(gy, k):
    gy, k = _c(gy), _c(k)
    if _fast is not None:
        b, o, h, w = gy.shape
        if b * o * k.shape[1] * h * w <= _CONV_LOOP_MAX:
            return _fast.conv3x3_grad_input(gy, k)
    return _ref.conv3x3_grad_input(gy, k)


def conv3x3_grad_kernel(x, gy):
    x, gy = _c(x), _c(gy)
    if _fast is not None:
        b, c, h, w = x.shape
        if b * c * gy.shape[1] * h * w <= _CONV_LOOP_MAX:
            return _fast.conv3x3_grad_kernel(x, gy)
    return _ref.conv3x3_grad_kernel(x, gy)


def nmax3(x):
    x = _c(x)
    if _fast is not None:
        return _fast.nmax3(x)
    return _ref.nmax3(x)


def nmax3_scatter(gy, idx):
    gy = _c(gy)
    if _fast is not None:
        return _fast.nmax3_scatter(gy, np.ascontiguousarray(idx, dtype=np.int8))
    return _ref.nmax3_scatter(gy, idx)


def maxpool2(x):
    x = _c(x)
    if _fast is not None:
        return _fast.maxpool2(x)
    return _ref.maxpool2(x)


def maxpool2_scatter(gy, idx, h, w):
    gy = _c(gy)
    if _fast is not None:
        return _fast.maxpool2_scatter(gy, np.ascontiguousarray(idx, dtype=np.int8), h, w)
    return _ref.maxpool2_scatter(gy, idx, h, w)


def mvprop_forward(rbar, p, n_iter):
    rbar, p = _c(rbar), _c(p)
    if _fast is not None:
        return _fast.mvprop_forward(rbar, p, n_iter)
    return _ref.mvprop_forward(rbar, p, n_iter)


def mvprop_backward(gv, rbar, p, nm, idx, upd):
    gv, rbar, p = _c(gv), _c(rbar), _c(p)
    if _fast is not None:
        return _fast.mvprop_backward(gv, rbar, p, _c(nm),
                                     np.ascontiguousarray(idx, dtype=np.int8),
                                     np.ascontiguousarray(upd, dtype=np.uint8))
    return _ref.mvprop_backward(gv, rbar, p, nm, idx, upd)
