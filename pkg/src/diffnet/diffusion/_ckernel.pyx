# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled simulation kernel.

Same contract as the pure-Python kernel. Accumulations run left to right
with the same expression grouping, and the extension is built with FMA
contraction disabled, so both backends agree bit for bit.
"""

import numpy as np

cimport numpy as cnp

BACKEND = "c"


def run_chunk(double[:, ::1] w, double[:, ::1] wp, cnp.uint8_t[:, ::1] dyn,
              double[:, ::1] wo, double[::1] mu, double[::1] su, double[::1] sv,
              double[:, ::1] a_static, cnp.uint8_t[:, ::1] group_mask,
              double[::1] theta_pairs,
              cnp.int64_t[::1] pair_i, cnp.int64_t[::1] pair_j,
              double[:, :, ::1] u1, double[:, ::1] v1,
              double[:, :, ::1] u2, double[:, ::1] v2,
              double[:, :, ::1] out_w1, double[:, :, ::1] out_w2,
              double[:, ::1] out_dsq, cnp.uint8_t[:, ::1] out_h1):
    """Advance both recursions over one chunk of iterations (in place)."""
    cdef Py_ssize_t t_len = u1.shape[0]
    cdef Py_ssize_t n = w.shape[0]
    cdef Py_ssize_t m = w.shape[1]
    cdef Py_ssize_t n_pairs = pair_i.shape[0]
    cdef Py_ssize_t t, k, l, j, p, ki, kj
    cdef double acc, dval, r, tt, dj, wgt
    cdef cnp.int64_t sl, sk, smax

    u_arr = np.empty((n, m))
    psi_arr = np.empty((n, m))
    new_arr = np.empty((n, m))
    d_arr = np.empty(n)
    b_arr = np.empty((n, n))
    sizes_arr = np.empty(n, dtype=np.int64)
    cdef double[:, ::1] u_buf = u_arr
    cdef double[:, ::1] psi = psi_arr
    cdef double[:, ::1] wnew = new_arr
    cdef double[::1] dv = d_arr
    cdef double[:, ::1] b = b_arr
    cdef cnp.int64_t[::1] sizes = sizes_arr

    for t in range(t_len):
        # recursion 1: adapt
        for k in range(n):
            for j in range(m):
                u_buf[k, j] = su[k] * u1[t, k, j]
            acc = 0.0
            for j in range(m):
                acc = acc + u_buf[k, j] * wo[k, j]
            dval = acc + sv[k] * v1[t, k]
            acc = 0.0
            for j in range(m):
                acc = acc + u_buf[k, j] * w[k, j]
            r = acc - dval
            tt = 2.0 * r
            for j in range(m):
                psi[k, j] = w[k, j] - mu[k] * (tt * u_buf[k, j])
        # recursion 1: combine over the static weights
        for k in range(n):
            for j in range(m):
                wnew[k, j] = 0.0
        for l in range(n):
            for k in range(n):
                wgt = a_static[l, k]
                for j in range(m):
                    wnew[k, j] = wnew[k, j] + wgt * psi[l, j]
        for k in range(n):
            for j in range(m):
                w[k, j] = wnew[k, j]
                out_w1[t, k, j] = wnew[k, j]

        # recursion 2: adapt with an independent sample
        for k in range(n):
            for j in range(m):
                u_buf[k, j] = su[k] * u2[t, k, j]
            acc = 0.0
            for j in range(m):
                acc = acc + u_buf[k, j] * wo[k, j]
            dval = acc + sv[k] * v2[t, k]
            acc = 0.0
            for j in range(m):
                acc = acc + u_buf[k, j] * wp[k, j]
            r = acc - dval
            tt = 2.0 * r
            for j in range(m):
                psi[k, j] = wp[k, j] - mu[k] * (tt * u_buf[k, j])
        # recursion 2: Metropolis weights recomputed from the current sets
        for k in range(n):
            sl = 0
            for l in range(n):
                if dyn[l, k]:
                    sl = sl + 1
            sizes[k] = sl
        for l in range(n):
            sl = sizes[l]
            for k in range(n):
                if dyn[l, k]:
                    sk = sizes[k]
                    smax = sl if sl > sk else sk
                    b[l, k] = 1.0 / (<double> smax)
                else:
                    b[l, k] = 0.0
        for k in range(n):
            acc = 0.0
            for l in range(n):
                if l != k:
                    acc = acc + b[l, k]
            b[k, k] = 1.0 - acc
        for k in range(n):
            for j in range(m):
                wnew[k, j] = 0.0
        for l in range(n):
            for k in range(n):
                wgt = b[l, k]
                for j in range(m):
                    wnew[k, j] = wnew[k, j] + wgt * psi[l, j]
        for k in range(n):
            for j in range(m):
                wp[k, j] = wnew[k, j]
                out_w2[t, k, j] = wnew[k, j]

        # clustering test on recursion-1 iterates; rebuild the sets
        for k in range(n):
            for l in range(n):
                dyn[k, l] = group_mask[k, l]
        for p in range(n_pairs):
            ki = <Py_ssize_t> pair_i[p]
            kj = <Py_ssize_t> pair_j[p]
            acc = 0.0
            for j in range(m):
                dj = w[ki, j] - w[kj, j]
                acc = acc + dj * dj
            out_dsq[t, p] = acc
            if acc >= theta_pairs[p]:
                out_h1[t, p] = 1
            else:
                out_h1[t, p] = 0
                dyn[ki, kj] = 1
                dyn[kj, ki] = 1
