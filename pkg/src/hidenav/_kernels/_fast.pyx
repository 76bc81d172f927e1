# Compiled kernels mirroring _ref.py. Plain loops; fastest at the small
# array sizes the planner runs on (single maps, modest batches).
import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "fast"


def conv3x3(double[:, :, :, ::1] x, double[:, :, :, ::1] k):
    cdef Py_ssize_t b = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t o = k.shape[0]
    out = np.zeros((b, o, h, w), dtype=np.float64)
    cdef double[:, :, :, ::1] y = out
    cdef Py_ssize_t ib, io, ic, i, j, di, dj, ii, jj
    cdef double acc
    for ib in range(b):
        for io in range(o):
            for i in range(h):
                for j in range(w):
                    acc = 0.0
                    for ic in range(c):
                        for di in range(-1, 2):
                            ii = i + di
                            if ii < 0 or ii >= h:
                                continue
                            for dj in range(-1, 2):
                                jj = j + dj
                                if jj < 0 or jj >= w:
                                    continue
                                acc += x[ib, ic, ii, jj] * k[io, ic, di + 1, dj + 1]
                    y[ib, io, i, j] = acc
    return out


def conv3x3_grad_input(double[:, :, :, ::1] gy, double[:, :, :, ::1] k):
    cdef Py_ssize_t b = gy.shape[0], o = gy.shape[1], h = gy.shape[2], w = gy.shape[3]
    cdef Py_ssize_t c = k.shape[1]
    out = np.zeros((b, c, h, w), dtype=np.float64)
    cdef double[:, :, :, ::1] gx = out
    cdef Py_ssize_t ib, io, ic, i, j, di, dj, ii, jj
    for ib in range(b):
        for io in range(o):
            for i in range(h):
                for j in range(w):
                    for ic in range(c):
                        for di in range(-1, 2):
                            ii = i + di
                            if ii < 0 or ii >= h:
                                continue
                            for dj in range(-1, 2):
                                jj = j + dj
                                if jj < 0 or jj >= w:
                                    continue
                                gx[ib, ic, ii, jj] += gy[ib, io, i, j] * k[io, ic, di + 1, dj + 1]
    return out


def conv3x3_grad_kernel(double[:, :, :, ::1] x, double[:, :, :, ::1] gy):
    cdef Py_ssize_t b = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t o = gy.shape[1]
    out = np.zeros((o, c, 3, 3), dtype=np.float64)
    cdef double[:, :, :, ::1] gk = out
    cdef Py_ssize_t ib, io, ic, i, j, di, dj, ii, jj
    for ib in range(b):
        for io in range(o):
            for i in range(h):
                for j in range(w):
                    for ic in range(c):
                        for di in range(-1, 2):
                            ii = i + di
                            if ii < 0 or ii >= h:
                                continue
                            for dj in range(-1, 2):
                                jj = j + dj
                                if jj < 0 or jj >= w:
                                    continue
                                gk[io, ic, di + 1, dj + 1] += gy[ib, io, i, j] * x[ib, ic, ii, jj]
    return out


def nmax3(double[:, :, ::1] x):
    cdef Py_ssize_t b = x.shape[0], h = x.shape[1], w = x.shape[2]
    yo = np.empty((b, h, w), dtype=np.float64)
    io = np.empty((b, h, w), dtype=np.int8)
    cdef double[:, :, ::1] y = yo
    cdef signed char[:, :, ::1] idx = io
    cdef Py_ssize_t ib, i, j, di, dj, ii, jj
    cdef double best, v
    cdef signed char slot
    for ib in range(b):
        for i in range(h):
            for j in range(w):
                best = 0.0
                slot = -1
                for di in range(-1, 2):
                    ii = i + di
                    if ii < 0 or ii >= h:
                        continue
                    for dj in range(-1, 2):
                        jj = j + dj
                        if jj < 0 or jj >= w:
                            continue
                        v = x[ib, ii, jj]
                        if slot < 0 or v > best:
                            best = v
                            slot = <signed char>((di + 1) * 3 + dj + 1)
                y[ib, i, j] = best
                idx[ib, i, j] = slot
    return yo, io


def nmax3_scatter(double[:, :, ::1] gy, signed char[:, :, ::1] idx):
    cdef Py_ssize_t b = gy.shape[0], h = gy.shape[1], w = gy.shape[2]
    out = np.zeros((b, h, w), dtype=np.float64)
    cdef double[:, :, ::1] gx = out
    cdef Py_ssize_t ib, i, j
    cdef signed char s
    for ib in range(b):
        for i in range(h):
            for j in range(w):
                s = idx[ib, i, j]
                gx[ib, i + s // 3 - 1, j + s % 3 - 1] += gy[ib, i, j]
    return out


def maxpool2(double[:, :, :, ::1] x):
    cdef Py_ssize_t b = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t ho = (h + 1) // 2, wo = (w + 1) // 2
    yo = np.empty((b, c, ho, wo), dtype=np.float64)
    io = np.empty((b, c, ho, wo), dtype=np.int8)
    cdef double[:, :, :, ::1] y = yo
    cdef signed char[:, :, :, ::1] idx = io
    cdef Py_ssize_t ib, ic, i, j, di, dj, ii, jj
    cdef double best, v
    cdef signed char slot
    for ib in range(b):
        for ic in range(c):
            for i in range(ho):
                for j in range(wo):
                    best = 0.0
                    slot = -1
                    for di in range(2):
                        ii = 2 * i + di
                        if ii >= h:
                            continue
                        for dj in range(2):
                            jj = 2 * j + dj
                            if jj >= w:
                                continue
                            v = x[ib, ic, ii, jj]
                            if slot < 0 or v > best:
                                best = v
                                slot = <signed char>(di * 2 + dj)
                    y[ib, ic, i, j] = best
                    idx[ib, ic, i, j] = slot
    return yo, io


def maxpool2_scatter(double[:, :, :, ::1] gy, signed char[:, :, :, ::1] idx,
                     Py_ssize_t h, Py_ssize_t w):
    cdef Py_ssize_t b = gy.shape[0], c = gy.shape[1], ho = gy.shape[2], wo = gy.shape[3]
    out = np.zeros((b, c, h, w), dtype=np.float64)
    cdef double[:, :, :, ::1] gx = out
    cdef Py_ssize_t ib, ic, i, j
    cdef signed char s
    for ib in range(b):
        for ic in range(c):
            for i in range(ho):
                for j in range(wo):
                    s = idx[ib, ic, i, j]
                    gx[ib, ic, 2 * i + s // 2, 2 * j + s % 2] += gy[ib, ic, i, j]
    return out


def mvprop_forward(double[:, :, ::1] rbar, double[:, :, ::1] p, Py_ssize_t n_iter):
    cdef Py_ssize_t g = rbar.shape[0], h = rbar.shape[1], w = rbar.shape[2]
    vo = np.empty((g, h, w), dtype=np.float64)
    nmo = np.empty((n_iter, g, h, w), dtype=np.float64)
    ido = np.empty((n_iter, g, h, w), dtype=np.int8)
    updo = np.empty((n_iter, g, h, w), dtype=np.uint8)
    cdef double[:, :, ::1] v = vo
    cdef double[:, :, :, ::1] nm = nmo
    cdef signed char[:, :, :, ::1] idx = ido
    cdef unsigned char[:, :, :, ::1] upd = updo
    cdef Py_ssize_t k, ig, i, j, di, dj, ii, jj
    cdef double best, val, vbar
    cdef signed char slot
    v[:, :, :] = rbar
    prev = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] pv = prev
    for k in range(n_iter):
        for ig in range(g):
            pv[:, :] = v[ig]
            for i in range(h):
                for j in range(w):
                    best = 0.0
                    slot = -1
                    for di in range(-1, 2):
                        ii = i + di
                        if ii < 0 or ii >= h:
                            continue
                        for dj in range(-1, 2):
                            jj = j + dj
                            if jj < 0 or jj >= w:
                                continue
                            val = pv[ii, jj]
                            if slot < 0 or val > best:
                                best = val
                                slot = <signed char>((di + 1) * 3 + dj + 1)
                    nm[k, ig, i, j] = best
                    idx[k, ig, i, j] = slot
                    vbar = rbar[ig, i, j] + p[ig, i, j] * (best - rbar[ig, i, j])
                    if vbar > pv[i, j]:
                        upd[k, ig, i, j] = 1
                        v[ig, i, j] = vbar
                    else:
                        upd[k, ig, i, j] = 0
                        v[ig, i, j] = pv[i, j]
    return vo, nmo, ido, updo


def mvprop_backward(double[:, :, ::1] gv_in, double[:, :, ::1] rbar,
                    double[:, :, ::1] p, double[:, :, :, ::1] nm,
                    signed char[:, :, :, ::1] idx, unsigned char[:, :, :, ::1] upd):
    cdef Py_ssize_t n_iter = nm.shape[0]
    cdef Py_ssize_t g = rbar.shape[0], h = rbar.shape[1], w = rbar.shape[2]
    gro = np.zeros((g, h, w), dtype=np.float64)
    gpo = np.zeros((g, h, w), dtype=np.float64)
    gvo = np.array(gv_in, dtype=np.float64, copy=True)
    nxt = np.zeros((g, h, w), dtype=np.float64)
    cdef double[:, :, ::1] g_rbar = gro
    cdef double[:, :, ::1] g_p = gpo
    cdef double[:, :, ::1] gv = gvo
    cdef double[:, :, ::1] gn = nxt
    cdef Py_ssize_t k, ig, i, j
    cdef double gvb
    cdef signed char s
    for k in range(n_iter - 1, -1, -1):
        gn[:, :, :] = 0.0
        for ig in range(g):
            for i in range(h):
                for j in range(w):
                    if upd[k, ig, i, j]:
                        gvb = gv[ig, i, j]
                        g_p[ig, i, j] += gvb * (nm[k, ig, i, j] - rbar[ig, i, j])
                        g_rbar[ig, i, j] += gvb * (1.0 - p[ig, i, j])
                        s = idx[k, ig, i, j]
                        gn[ig, i + s // 3 - 1, j + s % 3 - 1] += gvb * p[ig, i, j]
                    else:
                        gn[ig, i, j] += gv[ig, i, j]
        gv[:, :, :] = gn
    for ig in range(g):
        for i in range(h):
            for j in range(w):
                g_rbar[ig, i, j] += gv[ig, i, j]
    return gro, gpo
