"""Pure-numpy reference implementations of the hot kernels.

All functions take and return C-contiguous float64 arrays. Layouts:
    conv3x3      x (B, C, H, W), k (O, C, 3, 3) -> (B, O, H, W), zero-padded same
    nmax3        x (B, H, W) -> max over the 3x3 neighborhood, clipped at borders
    maxpool2     x (B, C, H, W) -> 2x2/stride-2 max, ceil mode (partial edge windows)
    mvprop       value-propagation recurrence over (G, H, W) maps

Argmax indices are window slots in row-major order; ties pick the first slot,
which fixes the gradient routing.
"""
import numpy as np

BACKEND = "ref"

_NEG = -np.inf


def conv3x3(x, k):
    b, c, h, w = x.shape
    o = k.shape[0]
    xp = np.zeros((b, c, h + 2, w + 2), dtype=np.float64)
    xp[:, :, 1:-1, 1:-1] = x
    win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(2, 3))
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * h * w, c * 9)
    y = cols @ k.reshape(o, c * 9).T
    return np.ascontiguousarray(y.reshape(b, h, w, o).transpose(0, 3, 1, 2))


def conv3x3_grad_input(gy, k):
    # full correlation with the flipped, transposed kernel
    o, c = k.shape[0], k.shape[1]
    kt = np.ascontiguousarray(k[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    return conv3x3(gy, kt.reshape(c, o, 3, 3))


def conv3x3_grad_kernel(x, gy):
    b, c, h, w = x.shape
    o = gy.shape[1]
    xp = np.zeros((b, c, h + 2, w + 2), dtype=np.float64)
    xp[:, :, 1:-1, 1:-1] = x
    win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(2, 3))
    cols = win.transpose(1, 4, 5, 0, 2, 3).reshape(c * 9, b * h * w)
    gk = cols @ gy.transpose(0, 2, 3, 1).reshape(b * h * w, o)
    return np.ascontiguousarray(gk.reshape(c, 3, 3, o).transpose(3, 0, 1, 2))


def _shift_stack3(x):
    """(9, B, H, W) stack of the 3x3 window slots, -inf outside the grid."""
    b, h, w = x.shape
    xp = np.full((b, h + 2, w + 2), _NEG, dtype=np.float64)
    xp[:, 1:-1, 1:-1] = x
    slots = [xp[:, 1 + di:1 + di + h, 1 + dj:1 + dj + w]
             for di in (-1, 0, 1) for dj in (-1, 0, 1)]
    return np.stack(slots, axis=0)


def nmax3(x):
    stack = _shift_stack3(x)
    idx = np.argmax(stack, axis=0).astype(np.int8)
    return np.max(stack, axis=0), idx


def nmax3_scatter(gy, idx):
    b, h, w = gy.shape
    gp = np.zeros((b, h + 2, w + 2), dtype=np.float64)
    for s in range(9):
        di, dj = s // 3 - 1, s % 3 - 1
        gp[:, 1 + di:1 + di + h, 1 + dj:1 + dj + w] += gy * (idx == s)
    return np.ascontiguousarray(gp[:, 1:-1, 1:-1])


def maxpool2(x):
    b, c, h, w = x.shape
    ho, wo = (h + 1) // 2, (w + 1) // 2
    xp = np.full((b, c, 2 * ho, 2 * wo), _NEG, dtype=np.float64)
    xp[:, :, :h, :w] = x
    win = xp.reshape(b, c, ho, 2, wo, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, ho, wo, 4)
    idx = np.argmax(win, axis=-1).astype(np.int8)
    return np.max(win, axis=-1), idx


def maxpool2_scatter(gy, idx, h, w):
    b, c = gy.shape[0], gy.shape[1]
    gx = np.zeros((b, c, h, w), dtype=np.float64)
    for s in range(4):
        di, dj = s // 2, s % 2
        g = gy * (idx == s)
        nh = (h - di + 1) // 2
        nw = (w - dj + 1) // 2
        gx[:, :, di::2, dj::2] += g[:, :, :nh, :nw]
    return gx


def mvprop_forward(rbar, p, n_iter):
    """Unrolled recurrence v0 = rbar; v <- max(v, rbar + p*(nmax3(v) - rbar)).

    Returns (v, nm, idx, upd): per-iteration neighborhood maxima, their window
    slots, and the update mask (where the candidate strictly improved v).
    """
    g, h, w = rbar.shape
    v = rbar.copy()
    nm = np.empty((n_iter, g, h, w), dtype=np.float64)
    idx = np.empty((n_iter, g, h, w), dtype=np.int8)
    upd = np.empty((n_iter, g, h, w), dtype=np.uint8)
    for k in range(n_iter):
        m, i = nmax3(v)
        vbar = rbar + p * (m - rbar)
        u = vbar > v
        v = np.where(u, vbar, v)
        nm[k] = m
        idx[k] = i
        upd[k] = u
    return v, nm, idx, upd


def mvprop_backward(gv, rbar, p, nm, idx, upd):
    gv = gv.copy()
    g_rbar = np.zeros_like(rbar)
    g_p = np.zeros_like(p)
    for k in range(nm.shape[0] - 1, -1, -1):
        u = upd[k].astype(np.float64)
        g_vbar = gv * u
        gv = gv * (1.0 - u)
        g_p += g_vbar * (nm[k] - rbar)
        g_rbar += g_vbar * (1.0 - p)
        gv += nmax3_scatter(g_vbar * p, idx[k])
    g_rbar += gv
    return g_rbar, g_p
