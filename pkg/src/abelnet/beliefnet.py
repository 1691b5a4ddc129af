"""Directed sigmoid belief networks.

A network is an input layer of marginal Bernoulli biases followed by a stack
of transitional layers (dense or convolutional). Sampling runs forward layer
by layer; the joint log-probability factorizes over layers, and its gradient
decomposes into per-layer pieces that depend only on the states adjacent to
each layer, so the pieces can be computed independently (and in parallel).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .numcore import (
    RngStream,
    as_bits,
    bernoulli_vec,
    check_finite,
    log_sigmoid_pair,
    stable_sigmoid,
    stacked_uniforms,
)

FREE = "free"
CLAMPED = "clamped-input"

# enumerate_output_pmf refuses networks above this many total units
ENUM_GUARD = 24
_ENUM_CHUNK = 1 << 14


class EnumerationSizeError(ValueError):
    """Raised when exact enumeration would be exponentially large."""


class DenseBeliefLayer:
    """Fully connected transitional layer: unit i fires with probability
    sigmoid(b[i] + sum_j w[i, j] * h_prev[j])."""

    kind = "dense"

    def __init__(self, w, b):
        self.w = check_finite(np.ascontiguousarray(w, dtype=np.float64), "weights")
        self.b = check_finite(np.ascontiguousarray(b, dtype=np.float64), "biases")
        if self.w.ndim != 2 or self.b.ndim != 1 or self.w.shape[0] != self.b.size:
            raise ValueError("weight matrix must be (out, in) with one bias per row")

    @property
    def in_dim(self):
        return self.w.shape[1]

    @property
    def out_dim(self):
        return self.w.shape[0]

    def preact(self, h_prev):
        return h_prev @ self.w.T + self.b

    def probs(self, h_prev):
        return _kernels.active.dense_probs(self.w, self.b, h_prev)

    def sample(self, h_prev, u):
        return _kernels.active.sample_dense(self.w, self.b, h_prev, u)

    def grad(self, h_out, p, h_prev, coef):
        return _kernels.active.dense_layer_grad(h_out, p, h_prev, coef)

    def param_arrays(self):
        return [self.w, self.b]


class ConvBeliefLayer:
    """Convolutional transitional layer (valid cross-correlation, no padding).

    ``filters`` has shape (n_filters, in_channels, k, k); the flat input is
    interpreted as ``input_shape = (channels, height, width)`` and the flat
    output as (n_filters, out_h, out_w).
    """

    kind = "conv"

    def __init__(self, filters, biases, input_shape, stride=1):
        self.filters = check_finite(np.ascontiguousarray(filters, dtype=np.float64), "filters")
        self.biases = check_finite(np.ascontiguousarray(biases, dtype=np.float64), "biases")
        self.input_shape = tuple(int(s) for s in input_shape)
        self.stride = int(stride)
        if self.filters.ndim != 4 or self.filters.shape[2] != self.filters.shape[3]:
            raise ValueError("filters must be (n_filters, channels, k, k) with square kernels")
        if self.biases.shape != (self.filters.shape[0],):
            raise ValueError("one bias per filter required")
        c, h, w = self.input_shape
        if self.filters.shape[1] != c:
            raise ValueError("filter channel count does not match input shape")
        k = self.filters.shape[2]
        if k > h or k > w:
            raise ValueError("kernel larger than input")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        self.out_h = (h - k) // self.stride + 1
        self.out_w = (w - k) // self.stride + 1

    @property
    def in_dim(self):
        c, h, w = self.input_shape
        return c * h * w

    @property
    def out_dim(self):
        return self.filters.shape[0] * self.out_h * self.out_w

    @property
    def out_shape(self):
        return (self.filters.shape[0], self.out_h, self.out_w)

    def _windows(self, x):
        n = x.shape[0]
        c, h, w = self.input_shape
        k = self.filters.shape[2]
        img = x.reshape(n, c, h, w)
        win = np.lib.stride_tricks.sliding_window_view(img, (k, k), axis=(2, 3))
        return win[:, :, :: self.stride, :: self.stride]

    def preact(self, h_prev):
        win = self._windows(h_prev)
        z = np.einsum("ncyxuv,fcuv->nfyx", win, self.filters, optimize=True)
        z += self.biases[None, :, None, None]
        return z.reshape(h_prev.shape[0], self.out_dim)

    def probs(self, h_prev):
        return stable_sigmoid(self.preact(h_prev))

    def sample(self, h_prev, u):
        p = self.probs(h_prev)
        return p, (u < p).astype(np.float64)

    def grad(self, h_out, p, h_prev, coef):
        n = h_out.shape[0]
        delta = (coef[:, None] * (h_out - p)).reshape(n, *self.out_shape)
        win = self._windows(h_prev)
        g_filters = np.einsum("nfyx,ncyxuv->fcuv", delta, win, optimize=True)
        g_biases = delta.sum(axis=(0, 2, 3))
        return g_filters, g_biases

    def param_arrays(self):
        return [self.filters, self.biases]


@dataclass
class ChainSample:
    """One joint realization of every layer, first to last."""

    states: list

    @property
    def output(self):
        return self.states[-1]


@dataclass
class BeliefNetGrad:
    """Gradient of the joint log-probability, mirroring the parameters.

    ``input_bias`` is None when the network input is clamped (the marginal
    term is then absent from the joint). ``layers[l]`` holds the gradient
    tuple for transitional layer l, in the layer's own parameter order.
    """

    input_bias: np.ndarray | None
    layers: list

    def arrays(self):
        """Flat list aligned with BeliefNet.param_arrays(); None where the
        corresponding parameter has no gradient."""
        out = [self.input_bias]
        for g in self.layers:
            out.extend(g)
        return out

    def norm(self):
        total = 0.0
        for a in self.arrays():
            if a is not None:
                total += float(np.sum(a * a))
        return np.sqrt(total)


class BeliefNet:
    """Input biases plus a stack of transitional belief layers.

    ``clamp_mode`` is either FREE (the first layer is sampled from its
    marginal) or CLAMPED (the first layer is fixed to a supplied condition
    vector and the marginal term drops out of the joint and its gradient).
    """

    def __init__(self, input_bias, layers, clamp_mode=FREE, condition=None):
        self.input_bias = check_finite(
            np.ascontiguousarray(input_bias, dtype=np.float64), "input biases"
        )
        if self.input_bias.ndim != 1:
            raise ValueError("input biases must be a vector")
        self.layers = list(layers)
        d = self.input_bias.size
        for layer in self.layers:
            if layer.in_dim != d:
                raise ValueError(
                    f"layer expects input of size {layer.in_dim}, previous layer has {d}"
                )
            d = layer.out_dim
        if clamp_mode not in (FREE, CLAMPED):
            raise ValueError(f"unknown clamp mode {clamp_mode!r}")
        self.clamp_mode = clamp_mode
        self.condition = None
        if condition is not None:
            if clamp_mode != CLAMPED:
                raise ValueError("condition only makes sense in clamped-input mode")
            condition = as_bits(condition)
            if condition.size != self.input_bias.size:
                raise ValueError("condition length must match the input layer size")
            self.condition = condition

    @classmethod
    def dense(cls, sizes, rng: RngStream | None = None, weight_std=0.1):
        """Random dense network with the given layer sizes (input first)."""
        sizes = [int(s) for s in sizes]
        if len(sizes) < 1 or any(s < 1 for s in sizes):
            raise ValueError("need at least one layer of positive size")
        layers = []
        for d_in, d_out in zip(sizes[:-1], sizes[1:]):
            if rng is None:
                w = np.zeros((d_out, d_in))
            else:
                w = rng.normals(d_out, d_in) * weight_std
            layers.append(DenseBeliefLayer(w, np.zeros(d_out)))
        return cls(np.zeros(sizes[0]), layers)

    @property
    def dims(self):
        return [self.input_bias.size] + [layer.out_dim for layer in self.layers]

    @property
    def num_layers(self):
        return len(self.layers) + 1

    @property
    def num_units(self):
        return sum(self.dims)

    @property
    def clamped(self):
        return self.clamp_mode == CLAMPED

    def clamp(self, condition=None) -> "BeliefNet":
        """Clamped-input view sharing this network's parameter arrays."""
        net = BeliefNet.__new__(BeliefNet)
        net.input_bias = self.input_bias
        net.layers = self.layers
        net.clamp_mode = CLAMPED
        net.condition = None
        if condition is not None:
            condition = as_bits(condition)
            if condition.size != self.input_bias.size:
                raise ValueError("condition length must match the input layer size")
            net.condition = condition
        return net

    def free(self) -> "BeliefNet":
        """Free-running view sharing this network's parameter arrays."""
        net = BeliefNet.__new__(BeliefNet)
        net.input_bias = self.input_bias
        net.layers = self.layers
        net.clamp_mode = FREE
        net.condition = None
        return net

    def param_arrays(self):
        out = [self.input_bias]
        for layer in self.layers:
            out.extend(layer.param_arrays())
        return out


def clamp_input(net: BeliefNet, condition) -> BeliefNet:
    """Return a clamped-input view of ``net`` with the given condition."""
    return net.clamp(condition)


def layer_cond_prob(layer, h_prev) -> np.ndarray:
    """Per-unit firing probabilities of one layer given the previous state."""
    h_prev = as_bits(h_prev)
    if h_prev.size != layer.in_dim:
        raise ValueError(f"expected input of size {layer.in_dim}, got {h_prev.size}")
    return layer.probs(h_prev[None, :])[0]


def _condition_matrix(net, conditions, n):
    if conditions is None:
        if net.condition is None:
            raise ValueError("clamped-input network needs a condition to sample")
        conditions = net.condition
    cond = as_bits(conditions)
    if cond.ndim == 1:
        cond = np.broadcast_to(cond, (n, cond.size))
    if cond.shape != (n, net.input_bias.size):
        raise ValueError("condition batch must be (n_chains, input_dim)")
    return np.ascontiguousarray(cond)


def _draw_total(net, n_transitional=None) -> int:
    layers = net.layers if n_transitional is None else net.layers[:n_transitional]
    dims = ([] if net.clamped else [net.input_bias.size]) + [l.out_dim for l in layers]
    return sum(dims)


def _sample_stack(net, u, conditions=None, n_transitional=None):
    """Sample one chain per row of the uniform matrix ``u``; returns
    (states, probs) as stacked (n_chains, d_l) arrays per layer. probs[0] is
    None (the input layer's probabilities are just sigmoid(input_bias))."""
    n = u.shape[0]
    layers = net.layers if n_transitional is None else net.layers[:n_transitional]

    states = []
    probs = [None]
    col = 0
    if net.clamped:
        states.append(_condition_matrix(net, conditions, n))
    else:
        p1 = stable_sigmoid(net.input_bias)
        states.append((u[:, : p1.size] < p1).astype(np.float64))
        col = p1.size
    x = states[0]
    for layer in layers:
        u_l = np.ascontiguousarray(u[:, col : col + layer.out_dim])
        col += layer.out_dim
        p, x = layer.sample(x, u_l)
        states.append(x)
        probs.append(p)
    return states, probs


def sample_forward(net: BeliefNet, rng: RngStream, condition=None) -> ChainSample:
    """Draw one full chain by ancestral sampling (input layer first)."""
    u = rng.uniforms(_draw_total(net))[None, :]
    states, _ = _sample_stack(net, u, conditions=condition)
    return ChainSample([s[0] for s in states])


def sample_forward_batch(net: BeliefNet, rng: RngStream, n_chains: int, conditions=None):
    """Draw ``n_chains`` chains; chain i consumes the derived stream
    ``rng.derive(i)``, so the result is identical whether chains are drawn
    together or one at a time."""
    u = stacked_uniforms(rng, range(n_chains), _draw_total(net))
    return _sample_stack(net, u, conditions=conditions)


def chains_from_states(states) -> list:
    n = states[0].shape[0]
    return [ChainSample([s[i] for s in states]) for i in range(n)]


def _check_chain(net, states):
    dims = net.dims
    if len(states) != len(dims):
        raise ValueError(f"chain has {len(states)} layers, network has {len(dims)}")
    for s, d in zip(states, dims):
        if s.shape[-1] != d:
            raise ValueError("chain layer sizes do not match the network")


def log_joint(net: BeliefNet, chain: ChainSample) -> float:
    """Joint log-probability of a full chain (marginal term omitted when the
    input is clamped)."""
    return float(log_joint_batch(net, [s[None, :] for s in chain.states])[0])


def log_joint_batch(net: BeliefNet, states) -> np.ndarray:
    states = [as_bits(s) for s in states]
    _check_chain(net, states)
    n = states[0].shape[0]
    total = np.zeros(n)
    if not net.clamped:
        lp, lq = log_sigmoid_pair(net.input_bias)
        total += states[0] @ lp + (1.0 - states[0]) @ lq
    for layer, h_prev, h in zip(net.layers, states[:-1], states[1:]):
        lp, lq = log_sigmoid_pair(layer.preact(h_prev))
        total += np.sum(h * lp + (1.0 - h) * lq, axis=1)
    return total


def batch_weighted_grad(net, states, coef, probs=None, workers=1) -> BeliefNetGrad:
    """sum_n coef[n] * d log p(chain_n) / d theta, one gradient block per layer.

    Each block depends only on the two adjacent state matrices, so blocks are
    independent tasks; with ``workers > 1`` they run on a thread pool. The
    result is bitwise identical for any worker count because no two tasks
    share an output.
    """
    states = [np.ascontiguousarray(s, dtype=np.float64) for s in states]
    _check_chain(net, states)
    coef = np.ascontiguousarray(coef, dtype=np.float64)
    if coef.shape != (states[0].shape[0],):
        raise ValueError("need one weight per chain")

    tasks = []
    if not net.clamped:
        p1 = stable_sigmoid(net.input_bias)
        tasks.append(lambda p1=p1: _kernels.active.input_bias_grad(states[0], p1, coef))
    for idx, layer in enumerate(net.layers):
        def layer_task(idx=idx, layer=layer):
            p = probs[idx + 1] if probs is not None else layer.probs(states[idx])
            return layer.grad(states[idx + 1], p, states[idx], coef)
        tasks.append(layer_task)

    if workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda fn: fn(), tasks))
    else:
        results = [fn() for fn in tasks]

    if net.clamped:
        return BeliefNetGrad(None, results)
    return BeliefNetGrad(results[0], results[1:])


def grad_log_joint(net: BeliefNet, chain: ChainSample, workers=1) -> BeliefNetGrad:
    """Gradient of log_joint with respect to every parameter."""
    states = [as_bits(s)[None, :] for s in chain.states]
    return batch_weighted_grad(net, states, np.ones(1), workers=workers)


def sample_reverse(net: BeliefNet, x, rng: RngStream) -> ChainSample:
    """Sample hidden layers downward from a fixed output.

    Uses the transposed weights as approximate backward conditionals, with
    each target layer keeping its own forward bias; the output layer is the
    given vector exactly. Dense layers only.
    """
    for layer in net.layers:
        if layer.kind != "dense":
            raise ValueError("reverse sampling supports dense layers only")
    x = as_bits(x)
    if x.size != net.dims[-1]:
        raise ValueError("output vector length must match the last layer")
    states = [None] * net.num_layers
    states[-1] = x
    for j in range(len(net.layers) - 1, -1, -1):
        bias = net.input_bias if j == 0 else net.layers[j - 1].b
        p = stable_sigmoid(net.layers[j].w.T @ states[j + 1] + bias)
        states[j] = bernoulli_vec(p, rng)
    return ChainSample(states)


def _bits_block(start, stop, dim):
    idx = np.arange(start, stop, dtype=np.int64)
    return ((idx[:, None] >> np.arange(dim)) & 1).astype(np.float64)


def all_bit_vectors(dim) -> np.ndarray:
    """All 2**dim binary vectors; row r encodes r with bit j at column j."""
    return _bits_block(0, 1 << dim, dim)


def _product_bernoulli_table(p):
    # q[r] = prod_j p[j]**bit_j(r) * (1-p[j])**(1-bit_j(r)), LSB-first indexing
    q = np.ones(1)
    for pj in p:
        q = np.concatenate([q * (1.0 - pj), q * pj])
    return q


def _push_through_layer(layer, q_in, d_in, d_out):
    out = np.zeros(1 << d_out)
    for a in range(0, 1 << d_in, _ENUM_CHUNK):
        b = min(a + _ENUM_CHUNK, 1 << d_in)
        lp, lq = log_sigmoid_pair(layer.preact(_bits_block(a, b, d_in)))
        for c in range(0, 1 << d_out, _ENUM_CHUNK):
            d = min(c + _ENUM_CHUNK, 1 << d_out)
            bits_out = _bits_block(c, d, d_out)
            log_t = bits_out @ lp.T + (1.0 - bits_out) @ lq.T
            out[c:d] += np.exp(log_t) @ q_in[a:b]
    return out


def enumerate_output_pmf(net: BeliefNet):
    """Exact output distribution by full marginalization over hidden layers.

    Returns a :class:`abelnet.metrics.PmfTable`. Refuses networks whose
    enumerated units exceed ENUM_GUARD (the cost is exponential).
    """
    from .metrics import PmfTable  # local import: metrics depends on this module

    dims = net.dims
    enum_units = sum(dims[1:]) if net.clamped else sum(dims)
    if enum_units > ENUM_GUARD:
        raise EnumerationSizeError(
            f"enumeration over {enum_units} units exceeds the guard of {ENUM_GUARD}"
        )
    if net.clamped:
        if net.condition is None:
            raise ValueError("clamped-input network needs a condition to enumerate")
        if not net.layers:
            q = np.zeros(1 << dims[0])
            q[int(net.condition @ (1 << np.arange(dims[0])))] = 1.0
            return PmfTable(dims[0], q)
        q = _product_bernoulli_table(layer_cond_prob(net.layers[0], net.condition))
        remaining = net.layers[1:]
    else:
        q = _product_bernoulli_table(stable_sigmoid(net.input_bias))
        remaining = net.layers
    d_in = int(np.log2(q.size))
    for layer in remaining:
        q = _push_through_layer(layer, q, d_in, layer.out_dim)
        d_in = layer.out_dim
    return PmfTable(d_in, q)
