"""Scalar-output MLP critic with analytic parameter gradients.

The critic scores how plausible a (binary) sample looks; its gradients feed
the adversarial updates. Only parameter gradients are needed: the generator
side never differentiates through the sample itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numcore import RngStream, check_finite, stable_sigmoid

ACTIVATIONS = ("identity", "relu", "sigmoid")


@dataclass
class DiscLayer:
    w: np.ndarray
    b: np.ndarray
    activation: str


@dataclass
class DiscGrad:
    """Per-layer (weight, bias) gradients mirroring an MlpDiscriminator."""

    layers: list

    def arrays(self):
        out = []
        for gw, gb in self.layers:
            out.extend((gw, gb))
        return out

    def norm(self):
        return np.sqrt(sum(float(np.sum(a * a)) for a in self.arrays()))

    def add(self, other: "DiscGrad") -> "DiscGrad":
        return DiscGrad(
            [(gw + ow, gb + ob) for (gw, gb), (ow, ob) in zip(self.layers, other.layers)]
        )


class MlpDiscriminator:
    """Affine layers with elementwise activations; final output is scalar."""

    def __init__(self, layers):
        self.layers = []
        d = None
        for w, b, act in layers:
            w = check_finite(np.ascontiguousarray(w, dtype=np.float64), "critic weights")
            b = check_finite(np.ascontiguousarray(b, dtype=np.float64), "critic biases")
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError("each layer needs an (out, in) matrix and matching bias")
            if d is not None and w.shape[1] != d:
                raise ValueError("layer input size does not match previous output")
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
            d = w.shape[0]
            self.layers.append(DiscLayer(w, b, act))
        if not self.layers or self.layers[-1].w.shape[0] != 1:
            raise ValueError("final layer must produce a single score")

    @classmethod
    def create(cls, sizes, head="sigmoid", rng: RngStream | None = None, weight_std=0.1):
        """Random critic; ``sizes`` runs input, hidden..., 1. Hidden layers
        use relu, the head is ``sigmoid`` or ``identity``."""
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2 or sizes[-1] != 1:
            raise ValueError("sizes must end with an output of 1")
        if head not in ("sigmoid", "identity"):
            raise ValueError("head must be 'sigmoid' or 'identity'")
        layers = []
        for i, (d_in, d_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            w = np.zeros((d_out, d_in)) if rng is None else rng.normals(d_out, d_in) * weight_std
            act = head if i == len(sizes) - 2 else "relu"
            layers.append((w, np.zeros(d_out), act))
        return cls(layers)

    @property
    def input_dim(self):
        return self.layers[0].w.shape[1]

    @property
    def head(self):
        return self.layers[-1].activation

    def param_arrays(self):
        out = []
        for layer in self.layers:
            out.extend((layer.w, layer.b))
        return out


def _activate(z, act):
    if act == "identity":
        return z
    if act == "relu":
        return np.maximum(z, 0.0)
    return stable_sigmoid(z)


def _activation_deriv(z, y, act):
    if act == "identity":
        return np.ones_like(z)
    if act == "relu":
        return (z > 0.0).astype(np.float64)
    return y * (1.0 - y)


def _forward_pass(disc, x):
    """Returns (scores, inputs list, preacts list, outputs list)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != disc.input_dim:
        raise ValueError(f"critic expects inputs of size {disc.input_dim}")
    inputs, preacts, outs = [], [], []
    for layer in disc.layers:
        inputs.append(x)
        z = x @ layer.w.T + layer.b
        y = _activate(z, layer.activation)
        preacts.append(z)
        outs.append(y)
        x = y
    return x[:, 0], inputs, preacts, outs


def disc_forward(disc: MlpDiscriminator, x) -> float:
    """Score a single input vector."""
    scores, *_ = _forward_pass(disc, np.asarray(x, dtype=np.float64)[None, :])
    return float(scores[0])


def disc_forward_batch(disc: MlpDiscriminator, xs) -> np.ndarray:
    scores, *_ = _forward_pass(disc, xs)
    return scores


def disc_value_and_grad(disc: MlpDiscriminator, xs, weight_fn):
    """Scores plus the weighted parameter gradient in one pass.

    ``weight_fn(scores)`` supplies one coefficient per sample; the returned
    gradient is sum_n coef[n] * d score_n / d params, accumulated by reverse
    propagation through the affine/activation stack.
    """
    scores, inputs, preacts, outs = _forward_pass(disc, xs)
    coef = np.asarray(weight_fn(scores), dtype=np.float64)
    if coef.shape != scores.shape:
        raise ValueError("weight_fn must return one coefficient per sample")
    g = coef[:, None]
    grads = [None] * len(disc.layers)
    for i in range(len(disc.layers) - 1, -1, -1):
        layer = disc.layers[i]
        gz = g * _activation_deriv(preacts[i], outs[i], layer.activation)
        grads[i] = (gz.T @ inputs[i], gz.sum(axis=0))
        if i:
            g = gz @ layer.w
    return scores, DiscGrad(grads)


def disc_backward(disc: MlpDiscriminator, x, upstream: float) -> DiscGrad:
    """upstream * d f(x) / d params for a single input."""
    xs = np.asarray(x, dtype=np.float64)[None, :]
    _, grad = disc_value_and_grad(disc, xs, lambda s: np.full_like(s, upstream))
    return grad


def clip_weights(disc: MlpDiscriminator, c: float) -> MlpDiscriminator:
    """Clamp every weight and bias into [-c, c], in place. Idempotent."""
    if not c > 0:
        raise ValueError("clip constant must be positive")
    for layer in disc.layers:
        np.clip(layer.w, -c, c, out=layer.w)
        np.clip(layer.b, -c, c, out=layer.b)
    return disc


def max_abs_param(disc: MlpDiscriminator) -> float:
    return max(float(np.max(np.abs(a))) for a in disc.param_arrays())
