# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled belief-layer kernels.

Same contract as :mod:`abelnet._kernels.pyref`. Matrix products go through
BLAS; element-wise work is fused into single nogil passes so the per-layer
thread parallelism in the gradient code scales on real cores.
"""

import numpy as np

from libc.math cimport exp
from scipy.linalg.cython_blas cimport dgemm

NAME = "cython"


cdef inline double _sigmoid(double x) nogil:
    cdef double e
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


cdef void _affine_t(double[:, ::1] w, double[:, ::1] x, double[:, ::1] out) nogil:
    # out (n, m) = x (n, k) @ w.T (k, m); row-major arrays fed to Fortran dgemm
    # by viewing each as its own transpose.
    cdef int m = w.shape[0]
    cdef int k = w.shape[1]
    cdef int n = x.shape[0]
    cdef double one = 1.0, zero = 0.0
    dgemm("T", "N", &m, &n, &k, &one, &w[0, 0], &k, &x[0, 0], &k, &zero, &out[0, 0], &m)


def dense_probs(double[:, ::1] w, double[::1] b, double[:, ::1] h_prev):
    """Row n, unit i: sigmoid(b[i] + sum_j w[i, j] * h_prev[n, j])."""
    cdef Py_ssize_t n = h_prev.shape[0], m = w.shape[0]
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    with nogil:
        _affine_t(w, h_prev, out)
        for i in range(n):
            for j in range(m):
                out[i, j] = _sigmoid(out[i, j] + b[j])
    return out_arr


def sample_dense(double[:, ::1] w, double[::1] b, double[:, ::1] h_prev,
                 double[:, ::1] u):
    """Forward-sample one dense layer: returns (probs, bits) with
    bits = (u < probs)."""
    cdef Py_ssize_t n = h_prev.shape[0], m = w.shape[0]
    p_arr = np.empty((n, m), dtype=np.float64)
    h_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] p = p_arr
    cdef double[:, ::1] h = h_arr
    cdef Py_ssize_t i, j
    with nogil:
        _affine_t(w, h_prev, p)
        for i in range(n):
            for j in range(m):
                p[i, j] = _sigmoid(p[i, j] + b[j])
                h[i, j] = 1.0 if u[i, j] < p[i, j] else 0.0
    return p_arr, h_arr


def dense_layer_grad(double[:, ::1] h_out, double[:, ::1] p,
                     double[:, ::1] h_prev, double[::1] coef):
    """Batch-weighted layer gradient.

    gw[i, j] = sum_n coef[n] * (h_out - p)[n, i] * h_prev[n, j]
    gb[i]    = sum_n coef[n] * (h_out - p)[n, i]
    """
    cdef Py_ssize_t n = h_out.shape[0], m = h_out.shape[1], k = h_prev.shape[1]
    d_arr = np.empty((n, m), dtype=np.float64)
    gw_arr = np.empty((m, k), dtype=np.float64)
    gb_arr = np.zeros(m, dtype=np.float64)
    cdef double[:, ::1] d = d_arr
    cdef double[:, ::1] gw = gw_arr
    cdef double[::1] gb = gb_arr
    cdef int mm = <int> m, kk = <int> k, nn = <int> n
    cdef double one = 1.0, zero = 0.0
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(n):
            for j in range(m):
                d[i, j] = coef[i] * (h_out[i, j] - p[i, j])
                gb[j] += d[i, j]
        # gw (m, k) = d.T (m, n) @ h_prev (n, k), via the transposed view trick.
        dgemm("N", "T", &kk, &mm, &nn, &one, &h_prev[0, 0], &kk, &d[0, 0], &mm,
              &zero, &gw[0, 0], &kk)
    return gw_arr, gb_arr


def input_bias_grad(double[:, ::1] h1, double[::1] p1, double[::1] coef):
    """Weighted gradient for the first-layer marginal biases.

    g[i] = sum_n coef[n] * (h1[n, i] - p1[i])
    """
    cdef Py_ssize_t n = h1.shape[0], m = h1.shape[1]
    g_arr = np.zeros(m, dtype=np.float64)
    cdef double[::1] g = g_arr
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(n):
            for j in range(m):
                g[j] += coef[i] * (h1[i, j] - p1[j])
    return g_arr


# Philox4x64-10 exactly as numpy's bit generator runs it (counter is
# incremented before each block, outputs are the four block words in order,
# doubles take the top 53 bits). Verified bit-for-bit against numpy in the
# test suite.
ctypedef unsigned long long u64

cdef u64 PHILOX_M0 = 0xD2E7470EE14C6C93ULL
cdef u64 PHILOX_M1 = 0xCA5A826395121157ULL
cdef u64 PHILOX_W0 = 0x9E3779B97F4A7C15ULL
cdef u64 PHILOX_W1 = 0xBB67AE8584CAA73BULL
cdef double DOUBLE_SCALE = 1.0 / 9007199254740992.0  # 2**-53


cdef inline u64 _mulhi(u64 a, u64 b) nogil:
    cdef u64 ah = a >> 32, al = a & 0xFFFFFFFFULL
    cdef u64 bh = b >> 32, bl = b & 0xFFFFFFFFULL
    cdef u64 c1 = ah * bl, c2 = al * bh
    cdef u64 carry = (((al * bl) >> 32) + (c1 & 0xFFFFFFFFULL) + (c2 & 0xFFFFFFFFULL)) >> 32
    return ah * bh + (c1 >> 32) + (c2 >> 32) + carry


def philox_rows(unsigned long long[:, ::1] keys, Py_ssize_t n):
    """(n_streams, n) uniforms on [0, 1); row j is the output of a fresh
    Philox stream with key ``keys[j]``."""
    cdef Py_ssize_t n_streams = keys.shape[0]
    out_arr = np.empty((n_streams, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef u64 c0, c1, c2, c3, k0, k1, hi0, hi1, t0, t2, ctr
    cdef u64 words[4]
    cdef Py_ssize_t s, j, w
    cdef int r
    with nogil:
        for s in range(n_streams):
            j = 0
            ctr = 0
            while j < n:
                ctr += 1
                c0 = ctr
                c1 = 0
                c2 = 0
                c3 = 0
                k0 = keys[s, 0]
                k1 = keys[s, 1]
                for r in range(10):
                    hi0 = _mulhi(PHILOX_M0, c0)
                    hi1 = _mulhi(PHILOX_M1, c2)
                    t0 = c0
                    t2 = c2
                    c0 = hi1 ^ c1 ^ k0
                    c1 = PHILOX_M1 * t2
                    c2 = hi0 ^ c3 ^ k1
                    c3 = PHILOX_M0 * t0
                    if r < 9:
                        k0 = k0 + PHILOX_W0
                        k1 = k1 + PHILOX_W1
                words[0] = c0
                words[1] = c1
                words[2] = c2
                words[3] = c3
                for w in range(4):
                    if j < n:
                        out[s, j] = <double> (words[w] >> 11) * DOUBLE_SCALE
                        j += 1
                    else:
                        break
    return out_arr
