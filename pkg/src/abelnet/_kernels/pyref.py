"""Pure-numpy implementations of the hot belief-layer kernels.

Import fallback for :mod:`abelnet._kernels._core`; both modules expose the
same functions with the same semantics. These all release the GIL inside the
underlying BLAS/ufunc calls, so the per-layer thread parallelism used by the
gradient code still scales, just less predictably than the compiled core.
"""

import numpy as np

from ..numcore import stable_sigmoid

NAME = "python"


def dense_probs(w, b, h_prev):
    """Row n, unit i: sigmoid(b[i] + sum_j w[i, j] * h_prev[n, j])."""
    return stable_sigmoid(h_prev @ w.T + b)


def sample_dense(w, b, h_prev, u):
    """Forward-sample one dense layer: returns (probs, bits) with
    bits = (u < probs)."""
    p = dense_probs(w, b, h_prev)
    return p, (u < p).astype(np.float64)


def dense_layer_grad(h_out, p, h_prev, coef):
    """Batch-weighted layer gradient.

    gw[i, j] = sum_n coef[n] * (h_out - p)[n, i] * h_prev[n, j]
    gb[i]    = sum_n coef[n] * (h_out - p)[n, i]
    """
    d = coef[:, None] * (h_out - p)
    return d.T @ h_prev, d.sum(axis=0)


def input_bias_grad(h1, p1, coef):
    """Weighted gradient for the first-layer marginal biases.

    g[i] = sum_n coef[n] * (h1[n, i] - p1[i])
    """
    return ((h1 - p1) * coef[:, None]).sum(axis=0)


# Philox4x64-10 exactly as numpy's bit generator runs it (counter is
# incremented before each block, outputs are the four block words in order,
# doubles take the top 53 bits). Verified bit-for-bit against numpy in the
# test suite.
_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_MASK32 = np.uint64(0xFFFFFFFF)
_SH32 = np.uint64(32)
_SH11 = np.uint64(11)
_DOUBLE_SCALE = 1.0 / 9007199254740992.0  # 2**-53


def _mulhilo(a, b):
    lo = a * b
    ah, al = a >> _SH32, a & _MASK32
    bh, bl = b >> _SH32, b & _MASK32
    c1 = ah * bl
    c2 = al * bh
    carry = (((al * bl) >> _SH32) + (c1 & _MASK32) + (c2 & _MASK32)) >> _SH32
    return ah * bh + (c1 >> _SH32) + (c2 >> _SH32) + carry, lo


def philox_rows(keys, n):
    """(n_streams, n) uniforms on [0, 1); row j is the output of a fresh
    Philox stream with key ``keys[j]``."""
    keys = np.ascontiguousarray(keys, dtype=np.uint64)
    n_streams = keys.shape[0]
    blocks = (n + 3) // 4
    with np.errstate(over="ignore"):
        c0 = np.tile(np.arange(1, blocks + 1, dtype=np.uint64), n_streams)
        c1 = np.zeros_like(c0)
        c2 = np.zeros_like(c0)
        c3 = np.zeros_like(c0)
        k0 = np.repeat(keys[:, 0], blocks)
        k1 = np.repeat(keys[:, 1], blocks)
        for r in range(10):
            hi0, lo0 = _mulhilo(_M0, c0)
            hi1, lo1 = _mulhilo(_M1, c2)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
            if r < 9:
                k0 = k0 + _W0
                k1 = k1 + _W1
        words = np.stack([c0, c1, c2, c3], axis=1).reshape(n_streams, 4 * blocks)
    return (words[:, :n] >> _SH11).astype(np.float64) * _DOUBLE_SCALE
