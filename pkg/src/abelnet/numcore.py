"""Low-level numerics: stable logistic primitives, binary-vector helpers and
deterministic splittable random streams.

Conventions used across the package:

* matrices and vectors are C-contiguous float64 numpy arrays;
* binary vectors ("bits") are float64 arrays whose entries are exactly
  0.0 or 1.0, so they can enter BLAS products without conversion.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(x: int) -> int:
    # Standard splitmix64 finalizer; full 64-bit avalanche.
    x = (x + _GOLDEN) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def _stream_key(seed: int, stream_id: int):
    """Philox key words for a (seed, stream_id) pair."""
    k0 = _splitmix64(seed)
    k1 = _splitmix64(stream_id ^ _splitmix64(seed ^ _GOLDEN))
    return k0, k1


def _child_id(stream_id: int, child: int) -> int:
    return _splitmix64(stream_id ^ _splitmix64(child & _MASK64))


class RngStream:
    """A counter-based random stream identified by (seed, stream_id).

    Two streams with the same (seed, stream_id) emit identical sequences on
    every platform (the generator is Philox, which is specified bit-exactly).
    Streams with distinct ids are statistically independent, so parallel work
    is made reproducible by deriving one stream per unit of work instead of
    sharing a stream across consumers.
    """

    __slots__ = ("seed", "stream_id", "_gen")

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        key = np.array(_stream_key(self.seed, self.stream_id), dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def derive(self, *ids: int) -> "RngStream":
        """Return a fresh child stream keyed by the given integers.

        Folding is sequential, so ``derive(a, b) == derive(a).derive(b)`` and
        the argument order matters. ``derive()`` replays this stream from the
        start.
        """
        sid = self.stream_id
        for i in ids:
            sid = _child_id(sid, int(i))
        return RngStream(self.seed, sid)

    def uniforms(self, n: int) -> np.ndarray:
        """n doubles uniform on [0, 1)."""
        return self._gen.random(n)

    def normals(self, *shape: int) -> np.ndarray:
        return self._gen.standard_normal(shape)

    def integers(self, low: int, high: int, n: int) -> np.ndarray:
        """n integers uniform on [low, high)."""
        return self._gen.integers(low, high, size=n)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def stable_sigmoid(x):
    """Logistic function 1/(1+exp(-x)), overflow-free for any finite x."""
    arr = np.asarray(x, dtype=np.float64)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    e = np.exp(arr[~pos])
    out[~pos] = e / (1.0 + e)
    return float(out[0]) if scalar else out


def log_sigmoid_pair(x):
    """Return (log sigmoid(x), log(1 - sigmoid(x))) without overflow.

    The two outputs satisfy the reflection identity bit-exactly: the first
    output at x equals the second output at -x.
    """
    arr = np.asarray(x, dtype=np.float64)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    sp = np.log1p(np.exp(-np.abs(arr)))  # softplus(-|x|), always in [0, log 2]
    pos = arr >= 0
    log_p = np.where(pos, -sp, arr - sp)
    log_q = np.where(pos, -arr - sp, -sp)
    if scalar:
        return float(log_p[0]), float(log_q[0])
    return log_p, log_q


def stacked_uniforms(parent: RngStream, ids, n: int) -> np.ndarray:
    """Uniform matrix whose row j equals ``parent.derive(ids[j]).uniforms(n)``
    drawn from a fresh stream.

    Semantically just a convenience over ``derive``; the generation runs
    through the kernel backend's Philox implementation, which skips the
    per-stream generator construction cost on large batches.
    """
    from . import _kernels  # deferred: the kernel modules import numcore

    ids = list(ids)
    keys = np.empty((len(ids), 2), dtype=np.uint64)
    for j, i in enumerate(ids):
        keys[j] = _stream_key(parent.seed, _child_id(parent.stream_id, int(i)))
    return _kernels.active.philox_rows(keys, int(n))


def bernoulli_vec(probs, rng: RngStream) -> np.ndarray:
    """Sample independent Bernoulli bits, one per entry of ``probs``.

    Entry i is 1.0 with probability probs[i]. Degenerate probabilities are
    exact: 0 never fires and 1 always fires.
    """
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError("probs must be a 1-D vector")
    if p.size and (np.min(p) < 0.0 or np.max(p) > 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    u = rng.uniforms(p.size)
    return (u < p).astype(np.float64)


def as_bits(x) -> np.ndarray:
    """Validate and return a float64 array of exact 0/1 entries."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.size and not np.all((arr == 0.0) | (arr == 1.0)):
        raise ValueError("expected a binary array with entries in {0, 1}")
    return arr


def check_finite(arr, what: str = "array") -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite values")
    return arr
