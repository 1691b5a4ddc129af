"""Evaluation helpers: exact/empirical output distributions, total-variation
distance, firing rates, and the sampled total-probability log-likelihood."""

from __future__ import annotations

import numpy as np

from .numcore import RngStream, as_bits, log_sigmoid_pair

PMF_TOL = 1e-9


class PmfTable:
    """Distribution over binary vectors of a fixed dimension.

    Backed by a dense probability array indexed by the integer encoding of
    the vector (bit j of the index is entry j, least significant first), so
    lookups, marginals and distances stay cheap even near the enumeration
    guard.
    """

    def __init__(self, dim, probs):
        self.dim = int(dim)
        self.probs = np.ascontiguousarray(probs, dtype=np.float64)
        if self.probs.shape != (1 << self.dim,):
            raise ValueError("probability table must have 2**dim entries")
        if np.min(self.probs) < -PMF_TOL:
            raise ValueError("probabilities must be non-negative")
        if abs(float(self.probs.sum()) - 1.0) > PMF_TOL:
            raise ValueError("probabilities must sum to 1")

    @staticmethod
    def index_of(bits) -> int:
        bits = as_bits(bits)
        return int(bits @ (1 << np.arange(bits.size, dtype=np.int64)))

    def bits_of(self, index) -> np.ndarray:
        return (((int(index) >> np.arange(self.dim)) & 1)).astype(np.float64)

    def prob(self, bits) -> float:
        bits = as_bits(bits)
        if bits.size != self.dim:
            raise ValueError(f"expected a vector of {self.dim} bits")
        return float(self.probs[self.index_of(bits)])

    __getitem__ = prob

    def items(self):
        for i, p in enumerate(self.probs):
            yield self.bits_of(i), float(p)

    def marginals(self) -> np.ndarray:
        """P(bit j = 1) for each position."""
        idx = np.arange(self.probs.size, dtype=np.int64)
        return np.array(
            [float(self.probs[((idx >> j) & 1).astype(bool)].sum()) for j in range(self.dim)]
        )

    def total(self) -> float:
        return float(self.probs.sum())


def empirical_pmf(samples) -> PmfTable:
    """Normalized counts of the given binary samples."""
    samples = as_bits(np.atleast_2d(samples))
    if samples.shape[0] == 0:
        raise ValueError("need at least one sample")
    d = samples.shape[1]
    if d > 24:
        raise ValueError("empirical table over more than 24 bits would be huge")
    idx = (samples @ (1 << np.arange(d, dtype=np.int64))).astype(np.int64)
    counts = np.bincount(idx, minlength=1 << d).astype(np.float64)
    return PmfTable(d, counts / samples.shape[0])


def tv_distance(p: PmfTable, q: PmfTable) -> float:
    """Total variation distance, half the L1 difference of the tables."""
    if p.dim != q.dim:
        raise ValueError("tables are over different outcome spaces")
    for t in (p, q):
        if abs(t.total() - 1.0) > PMF_TOL:
            raise ValueError("table is not normalized")
    return 0.5 * float(np.abs(p.probs - q.probs).sum())


def firing_rates(samples) -> np.ndarray:
    """Per-position mean of a stack of equal-length binary vectors."""
    samples = as_bits(np.atleast_2d(samples))
    if samples.shape[0] == 0:
        raise ValueError("need at least one sample")
    return samples.mean(axis=0)


def marginals(samples) -> np.ndarray:
    """Alias of firing_rates, named for image-style data."""
    return firing_rates(samples)


def _log_mean_exp(values) -> float:
    m = float(np.max(values))
    return m + float(np.log(np.mean(np.exp(values - m))))


def loglik_estimate(net, x, n_draws: int, rng: RngStream) -> float:
    """Sampled log-likelihood of one output vector.

    Draws ``n_draws`` chains down to the penultimate layer and averages the
    conditional probability of ``x`` under the final layer across the draws
    (in probability space, with a max-shifted log-sum-exp); returns the log
    of that average. With a single hidden stack level the result is exact.
    """
    from .beliefnet import _sample_stack  # deferred: beliefnet imports PmfTable

    if n_draws < 1:
        raise ValueError("need at least one draw")
    x = as_bits(x)
    if x.size != net.dims[-1]:
        raise ValueError(f"expected an output vector of {net.dims[-1]} bits")
    if not net.layers:
        lp, lq = log_sigmoid_pair(net.input_bias)
        return float(x @ lp + (1.0 - x) @ lq)
    streams = [rng.derive(i) for i in range(n_draws)]
    states, _ = _sample_stack(net, streams, n_transitional=len(net.layers) - 1)
    lp, lq = log_sigmoid_pair(net.layers[-1].preact(states[-1]))
    per_draw = lp @ x + lq @ (1.0 - x)
    return _log_mean_exp(per_draw)


def loglik_estimate_many(net, xs, n_draws: int, rng: RngStream) -> np.ndarray:
    """loglik_estimate for a batch of outputs, reusing one set of chain draws
    across all of them (cheaper; estimates are correlated across rows)."""
    from .beliefnet import _sample_stack

    xs = as_bits(np.atleast_2d(xs))
    if n_draws < 1:
        raise ValueError("need at least one draw")
    if xs.shape[1] != net.dims[-1]:
        raise ValueError(f"expected output vectors of {net.dims[-1]} bits")
    if not net.layers:
        lp, lq = log_sigmoid_pair(net.input_bias)
        return xs @ lp + (1.0 - xs) @ lq
    streams = [rng.derive(i) for i in range(n_draws)]
    states, _ = _sample_stack(net, streams, n_transitional=len(net.layers) - 1)
    lp, lq = log_sigmoid_pair(net.layers[-1].preact(states[-1]))  # (draws, d)
    per_draw = lp @ xs.T + lq @ (1.0 - xs.T)  # (draws, n)
    m = per_draw.max(axis=0)
    return m + np.log(np.mean(np.exp(per_draw - m), axis=0))
