# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels: band/plane convolution primitives and the dense CRF
message pass. Mirrors the signatures in ``reference.py``; float32 and
float64 supported via fused types, CRF pass is float64 only.
"""

import numpy as np

cimport cython
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport exp

cnp.import_array()

ctypedef fused real:
    float
    double


def band_conv(real[:, :, ::1] x, real[:, :, ::1] kern, int stride, int pad):
    cdef Py_ssize_t m = x.shape[0], b = x.shape[1], ci = x.shape[2]
    cdef Py_ssize_t kb = kern.shape[0], co = kern.shape[2]
    cdef Py_ssize_t bo = (b + 2 * pad - kb) // stride + 1
    out_arr = np.zeros((m, bo, co), dtype=np.asarray(x).dtype)
    cdef real[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, j, t, c, o, src
    cdef real xv
    for i in prange(m, nogil=True, schedule="static"):
        for j in range(bo):
            for t in range(kb):
                src = j * stride + t - pad
                if src < 0 or src >= b:
                    continue
                for c in range(ci):
                    xv = x[i, src, c]
                    if xv == 0:
                        continue
                    for o in range(co):
                        out[i, j, o] += xv * kern[t, c, o]
    return out_arr


def band_scatter(real[:, :, ::1] y, real[:, :, ::1] kern, int stride, int pad,
                 int out_bands):
    cdef Py_ssize_t m = y.shape[0], bi = y.shape[1], p = y.shape[2]
    cdef Py_ssize_t kb = kern.shape[0], q = kern.shape[2]
    out_arr = np.zeros((m, out_bands, q), dtype=np.asarray(y).dtype)
    cdef real[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, j, t, c, o, dst
    cdef real yv
    for i in prange(m, nogil=True, schedule="static"):
        for j in range(bi):
            for t in range(kb):
                dst = j * stride + t - pad
                if dst < 0 or dst >= out_bands:
                    continue
                for c in range(p):
                    yv = y[i, j, c]
                    if yv == 0:
                        continue
                    for o in range(q):
                        out[i, dst, o] += yv * kern[t, c, o]
    return out_arr


def band_kernel_grad(real[:, :, ::1] x, real[:, :, ::1] g, int kb, int stride,
                     int pad):
    cdef Py_ssize_t m = x.shape[0], b = x.shape[1], ci = x.shape[2]
    cdef Py_ssize_t bo = g.shape[1], co = g.shape[2]
    out_arr = np.zeros((kb, ci, co), dtype=np.asarray(x).dtype)
    cdef real[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, j, t, c, o, src
    cdef real xv
    # serial over samples: all samples accumulate into the same kernel slot
    for i in range(m):
        for j in range(bo):
            for t in range(kb):
                src = j * stride + t - pad
                if src < 0 or src >= b:
                    continue
                for c in range(ci):
                    xv = x[i, src, c]
                    if xv == 0:
                        continue
                    for o in range(co):
                        out[t, c, o] += xv * g[i, j, o]
    return out_arr


def plane_conv(real[:, :, :, ::1] x, real[:, :, :, ::1] kern, int stride,
               int pad):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], w = x.shape[2], ci = x.shape[3]
    cdef Py_ssize_t kh = kern.shape[0], kw = kern.shape[1], co = kern.shape[3]
    cdef Py_ssize_t ho = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t wo = (w + 2 * pad - kw) // stride + 1
    out_arr = np.zeros((n, ho, wo, co), dtype=np.asarray(x).dtype)
    cdef real[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t i, a, bcol, u, v, c, o, ra, rb
    cdef real xv
    for i in prange(n, nogil=True, schedule="static"):
        for a in range(ho):
            for bcol in range(wo):
                for u in range(kh):
                    ra = a * stride + u - pad
                    if ra < 0 or ra >= h:
                        continue
                    for v in range(kw):
                        rb = bcol * stride + v - pad
                        if rb < 0 or rb >= w:
                            continue
                        for c in range(ci):
                            xv = x[i, ra, rb, c]
                            if xv == 0:
                                continue
                            for o in range(co):
                                out[i, a, bcol, o] += xv * kern[u, v, c, o]
    return out_arr


def plane_scatter(real[:, :, :, ::1] y, real[:, :, :, ::1] kern, int stride,
                  int pad, int out_h, int out_w):
    cdef Py_ssize_t n = y.shape[0], hi = y.shape[1], wi = y.shape[2], p = y.shape[3]
    cdef Py_ssize_t kh = kern.shape[0], kw = kern.shape[1], q = kern.shape[3]
    out_arr = np.zeros((n, out_h, out_w, q), dtype=np.asarray(y).dtype)
    cdef real[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t i, a, bcol, u, v, c, o, da, db
    cdef real yv
    for i in prange(n, nogil=True, schedule="static"):
        for a in range(hi):
            for bcol in range(wi):
                for u in range(kh):
                    da = a * stride + u - pad
                    if da < 0 or da >= out_h:
                        continue
                    for v in range(kw):
                        db = bcol * stride + v - pad
                        if db < 0 or db >= out_w:
                            continue
                        for c in range(p):
                            yv = y[i, a, bcol, c]
                            if yv == 0:
                                continue
                            for o in range(q):
                                out[i, da, db, o] += yv * kern[u, v, c, o]
    return out_arr


def plane_kernel_grad(real[:, :, :, ::1] x, real[:, :, :, ::1] g, int kh,
                      int kw, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], w = x.shape[2], ci = x.shape[3]
    cdef Py_ssize_t ho = g.shape[1], wo = g.shape[2], co = g.shape[3]
    out_arr = np.zeros((kh, kw, ci, co), dtype=np.asarray(x).dtype)
    cdef real[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t i, a, bcol, u, v, c, o, ra, rb
    cdef real xv
    for i in range(n):
        for a in range(ho):
            for bcol in range(wo):
                for u in range(kh):
                    ra = a * stride + u - pad
                    if ra < 0 or ra >= h:
                        continue
                    for v in range(kw):
                        rb = bcol * stride + v - pad
                        if rb < 0 or rb >= w:
                            continue
                        for c in range(ci):
                            xv = x[i, ra, rb, c]
                            if xv == 0:
                                continue
                            for o in range(co):
                                out[u, v, c, o] += xv * g[i, a, bcol, o]
    return out_arr


def crf_message_pass(double[:, ::1] pos, double[:, ::1] app,
                     double[:, ::1] q, double theta_alpha, double theta_beta):
    """m_i(l) = sum_{j!=i} K_ij q_j(l); s_i = sum_{j!=i} K_ij.

    The kernel matrix is never materialized; rows are independent so the
    outer loop parallelizes without changing per-row summation order.
    """
    cdef Py_ssize_t n = pos.shape[0], dp = pos.shape[1], da = app.shape[1]
    cdef Py_ssize_t nl = q.shape[1]
    msg_arr = np.zeros((n, nl), dtype=np.float64)
    s_arr = np.zeros(n, dtype=np.float64)
    cdef double[:, ::1] msg = msg_arr
    cdef double[::1] ssum = s_arr
    cdef double inv_a = 1.0 / (2.0 * theta_alpha * theta_alpha)
    cdef double inv_b = 1.0 / (2.0 * theta_beta * theta_beta)
    cdef Py_ssize_t i, j, d, l
    cdef double dist, diff, k
    for i in prange(n, nogil=True, schedule="static"):
        for j in range(n):
            if j == i:
                continue
            dist = 0.0
            for d in range(dp):
                diff = pos[i, d] - pos[j, d]
                dist = dist + diff * diff * inv_a
            for d in range(da):
                diff = app[i, d] - app[j, d]
                dist = dist + diff * diff * inv_b
            k = exp(-dist)
            ssum[i] += k
            for l in range(nl):
                msg[i, l] += k * q[j, l]
    return msg_arr, s_arr
