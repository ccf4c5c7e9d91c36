# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled inner loops: pointwise small matvec and direct stencil sums."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def pointwise_matvec(double[:, :, :, ::1] C, double[:, :, :, ::1] g):
    """out[a, b, r, p] = sum_c C[a, r, c, p] * g[a, b, c, p]."""
    cdef Py_ssize_t Ba = g.shape[0], Bg = g.shape[1], R = g.shape[2], P = g.shape[3]
    cdef Py_ssize_t a, b, r, c, p
    cdef double coef
    out_arr = np.zeros((Ba, Bg, R, P))
    cdef double[:, :, :, ::1] out = out_arr
    with nogil:
        for a in range(Ba):
            for b in range(Bg):
                for r in range(R):
                    for c in range(R):
                        for p in range(P):
                            out[a, b, r, p] += C[a, r, c, p] * g[a, b, c, p]
    return out_arr


def direct_convolve(double[:, ::1] f, long[:, ::1] offsets, double[::1] weights,
                    bint periodic):
    """out[i, j] = sum_m w_m f[i - o_m0, j - o_m1], periodic wrap or zero outside."""
    cdef Py_ssize_t M0 = f.shape[0], M1 = f.shape[1], K = weights.shape[0]
    cdef Py_ssize_t m, i, j, si, s1, j0, j1
    cdef long d0, d1
    cdef double w
    out_arr = np.zeros((M0, M1))
    cdef double[:, ::1] out = out_arr
    with nogil:
        for m in range(K):
            d0 = offsets[m, 0]
            d1 = offsets[m, 1]
            w = weights[m]
            # rows wrap once per shift; columns split into contiguous runs
            if periodic:
                s1 = ((-d1) % M1 + M1) % M1
            else:
                j0 = d1 if d1 > 0 else 0
                j1 = M1 + d1 if d1 < 0 else M1
            for i in range(M0):
                si = i - d0
                if periodic:
                    si = (si % M0 + M0) % M0
                    for j in range(M1 - s1):
                        out[i, j] += w * f[si, s1 + j]
                    for j in range(M1 - s1, M1):
                        out[i, j] += w * f[si, j - (M1 - s1)]
                else:
                    if si < 0 or si >= M0:
                        continue
                    for j in range(j0, j1):
                        out[i, j] += w * f[si, j - d1]
    return out_arr
