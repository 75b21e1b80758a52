# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_fallback.py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, fabs, INFINITY
from libc.string cimport memcpy

cnp.import_array()

ctypedef fused real:
    float
    double


def im2col_nhwc(real[:, :, :, ::1] xpad, int k, int stride, int oh, int ow):
    cdef Py_ssize_t b = xpad.shape[0], c = xpad.shape[3]
    cdef Py_ssize_t n, i, j, ki, kj, row, col
    dtype = np.float32 if real is float else np.float64
    out_arr = np.empty((b * oh * ow, k * k * c), dtype=dtype)
    cdef real[:, ::1] out = out_arr
    cdef size_t nbytes = c * sizeof(real)
    with nogil:
        for n in range(b):
            for i in range(oh):
                for j in range(ow):
                    row = (n * oh + i) * ow + j
                    col = 0
                    for ki in range(k):
                        for kj in range(k):
                            memcpy(&out[row, col], &xpad[n, i * stride + ki, j * stride + kj, 0], nbytes)
                            col += c
    return out_arr


def col2im_nhwc(real[:, ::1] cols, tuple padded_shape, int k, int stride, int oh, int ow):
    cdef Py_ssize_t b = padded_shape[0], c = padded_shape[3]
    cdef Py_ssize_t n, i, j, ki, kj, ch, row, col, y, x
    dtype = np.float32 if real is float else np.float64
    dx_arr = np.zeros(padded_shape, dtype=dtype)
    cdef real[:, :, :, ::1] dx = dx_arr
    with nogil:
        # same accumulation order as the numpy fallback: (ki, kj) outermost
        for ki in range(k):
            for kj in range(k):
                for n in range(b):
                    for i in range(oh):
                        y = i * stride + ki
                        for j in range(ow):
                            x = j * stride + kj
                            row = (n * oh + i) * ow + j
                            col = (ki * k + kj) * c
                            for ch in range(c):
                                dx[n, y, x, ch] += cols[row, col + ch]
    return dx_arr


def pt_threshold_scan(cnp.int64_t[::1] cand_idx, double[::1] cand_val, long refractory,
                      double spki, double npki):
    cdef Py_ssize_t n = cand_idx.shape[0]
    cdef cnp.int64_t[::1] acc = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] rr = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t n_acc = 0, n_rr = 0, i, j, best, m, last_noise_start = 0
    cdef cnp.int64_t idx, jdx
    cdef double val, th1, th2, rr_avg, best_val
    for i in range(n):
        idx = cand_idx[i]
        val = cand_val[i]
        th1 = npki + 0.25 * (spki - npki)
        th2 = 0.5 * th1
        if n_rr > 0 and n_acc > 0:
            m = 8 if n_rr >= 8 else n_rr
            rr_avg = 0.0
            for j in range(n_rr - m, n_rr):
                rr_avg += rr[j]
            rr_avg /= m
            if idx - acc[n_acc - 1] > 1.66 * rr_avg:
                best = -1
                best_val = th2
                for j in range(last_noise_start, i):
                    jdx = cand_idx[j]
                    if jdx - acc[n_acc - 1] >= refractory and idx - jdx >= refractory and cand_val[j] > best_val:
                        best = j
                        best_val = cand_val[j]
                if best >= 0:
                    jdx = cand_idx[best]
                    rr[n_rr] = jdx - acc[n_acc - 1]
                    n_rr += 1
                    acc[n_acc] = jdx
                    n_acc += 1
                    spki = 0.25 * best_val + 0.75 * spki
                    th1 = npki + 0.25 * (spki - npki)
        if val > th1 and (n_acc == 0 or idx - acc[n_acc - 1] >= refractory):
            if n_acc > 0:
                rr[n_rr] = idx - acc[n_acc - 1]
                n_rr += 1
            acc[n_acc] = idx
            n_acc += 1
            spki = 0.125 * val + 0.875 * spki
            last_noise_start = i + 1
        else:
            npki = 0.125 * val + 0.875 * npki
    return np.asarray(acc[:n_acc]).copy()


def perplexity_search(double[:, ::1] dist2, double perplexity, double tol, int max_iter):
    cdef Py_ssize_t n = dist2.shape[0], i, j, it
    cdef double target = log(perplexity)
    P_arr = np.zeros((n, n), dtype=np.float64)
    betas_arr = np.ones(n, dtype=np.float64)
    ent_arr = np.zeros(n, dtype=np.float64)
    cdef double[:, ::1] P = P_arr
    cdef double[::1] betas = betas_arr
    cdef double[::1] ent = ent_arr
    cdef double beta, lo, hi, s, sd, h, diff, dmin, d
    with nogil:
        for i in range(n):
            dmin = INFINITY
            for j in range(n):
                if j != i and dist2[i, j] < dmin:
                    dmin = dist2[i, j]
            beta = 1.0
            lo = -INFINITY
            hi = INFINITY
            h = 0.0
            for it in range(max_iter):
                s = 0.0
                sd = 0.0
                for j in range(n):
                    if j != i:
                        d = dist2[i, j] - dmin
                        P[i, j] = exp(-d * beta)
                        s += P[i, j]
                        sd += d * P[i, j]
                h = log(s) + beta * sd / s
                diff = h - target
                if fabs(diff) <= tol:
                    break
                if diff > 0:
                    lo = beta
                    if hi == INFINITY:
                        beta = beta * 2.0
                    else:
                        beta = 0.5 * (beta + hi)
                else:
                    hi = beta
                    if lo == -INFINITY:
                        beta = beta * 0.5
                    else:
                        beta = 0.5 * (beta + lo)
            for j in range(n):
                if j != i:
                    P[i, j] /= s
            betas[i] = beta
            ent[i] = h
    return P_arr, betas_arr, ent_arr
