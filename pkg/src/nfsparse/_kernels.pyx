# cython: language_level=3
"""Compiled kernels for the position optimizer.

Same signatures and return conventions as ``_pykernels``; see that module
for the maths.
"""

import numpy as np
from libc.math cimport sin, cos, M_PI


def interference_terms(const double[::1] x, const double[::1] b,
                       const double[::1] theta, const double[:, ::1] w,
                       double wavelength, int order=2):
    cdef Py_ssize_t S = b.shape[0], T = theta.shape[0], N = x.shape[0]
    cdef Py_ssize_t s, t, n, m
    cdef double k = 2.0 * M_PI / wavelength
    cdef double h = 0.0, zr, zi, wst, ph, im_n, re_n, bs, th, scale, v
    if w.shape[0] != S or w.shape[1] != T:
        raise ValueError("weights must have shape (len(b), len(theta))")

    # exp(j phi) = exp(j k b x^2) * exp(j k theta x): trig only on the two margins
    eb_c_arr = np.empty((S, N))
    eb_s_arr = np.empty((S, N))
    et_c_arr = np.empty((T, N))
    et_s_arr = np.empty((T, N))
    cdef double[:, ::1] eb_c = eb_c_arr, eb_s = eb_s_arr, et_c = et_c_arr, et_s = et_s_arr
    for s in range(S):
        for n in range(N):
            ph = k * b[s] * x[n] * x[n]
            eb_c[s, n] = cos(ph)
            eb_s[s, n] = sin(ph)
    for t in range(T):
        for n in range(N):
            ph = k * theta[t] * x[n]
            et_c[t, n] = cos(ph)
            et_s[t, n] = sin(ph)

    cs_arr = np.empty(N)
    sn_arr = np.empty(N)
    c_arr = np.empty(N)
    grad_arr = np.zeros(N)
    hess_arr = np.zeros((N, N)) if order >= 2 else np.zeros((1, 1))
    cdef double[::1] cs = cs_arr, sn = sn_arr, c = c_arr, grad = grad_arr
    cdef double[:, ::1] hess = hess_arr

    for s in range(S):
        bs = b[s]
        for t in range(T):
            wst = w[s, t]
            if wst == 0.0:
                continue
            th = theta[t]
            zr = 0.0
            zi = 0.0
            for n in range(N):
                cs[n] = eb_c[s, n] * et_c[t, n] - eb_s[s, n] * et_s[t, n]
                sn[n] = eb_s[s, n] * et_c[t, n] + eb_c[s, n] * et_s[t, n]
                zr += cs[n]
                zi += sn[n]
            h += wst * (zr * zr + zi * zi)
            if order < 1:
                continue
            for n in range(N):
                c[n] = k * (2.0 * bs * x[n] + th)
                im_n = cs[n] * zi - sn[n] * zr
                grad[n] += 2.0 * wst * c[n] * im_n
            if order < 2:
                continue
            for n in range(N):
                im_n = cs[n] * zi - sn[n] * zr
                re_n = cs[n] * zr + sn[n] * zi - 1.0
                hess[n, n] += 2.0 * wst * (2.0 * k * bs * im_n - c[n] * c[n] * re_n)
                v = 2.0 * wst * c[n]
                for m in range(n + 1, N):
                    hess[n, m] += v * c[m] * (cs[n] * cs[m] + sn[n] * sn[m])

    scale = 1.0 / (S * T)
    h *= scale
    if order < 1:
        return h, None, None
    for n in range(N):
        grad[n] *= scale
    if order < 2:
        return h, grad_arr, None
    for n in range(N):
        hess[n, n] *= scale
        for m in range(n + 1, N):
            hess[n, m] *= scale
            hess[m, n] = hess[n, m]
    return h, grad_arr, hess_arr


def pav_nondecreasing(const double[::1] y):
    """Unweighted isotonic (nondecreasing) regression by pool adjacent violators."""
    cdef Py_ssize_t n = y.shape[0], i, j, top = -1
    out_arr = np.empty(n)
    sums_arr = np.empty(n)
    counts_arr = np.empty(n, dtype=np.intp)
    cdef double[::1] out = out_arr, sums = sums_arr
    cdef Py_ssize_t[::1] counts = counts_arr
    for i in range(n):
        top += 1
        sums[top] = y[i]
        counts[top] = 1
        while top > 0 and sums[top - 1] * counts[top] > sums[top] * counts[top - 1]:
            sums[top - 1] += sums[top]
            counts[top - 1] += counts[top]
            top -= 1
    i = 0
    for j in range(top + 1):
        for _ in range(counts[j]):
            out[i] = sums[j] / counts[j]
            i += 1
    return out_arr
