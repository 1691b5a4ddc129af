"""First-order update rules: plain SGD, RMSprop and Adam.

All three update a fixed list of parameter arrays in place given an aligned
list of gradient arrays. A ``None`` gradient slot means the parameter is
structurally absent from the objective (clamped input biases) and is skipped
entirely, including its accumulator.
"""

from __future__ import annotations

import numpy as np


class Sgd:
    kind = "sgd"
    default_lr = 1e-2

    def __init__(self, params, lr=None):
        self.lr = self.default_lr if lr is None else float(lr)
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")

    def step(self, params, grads):
        for p, g in zip(params, grads):
            if g is None:
                continue
            p -= self.lr * g

    def state_arrays(self):
        return []

    def scalars(self):
        return [self.lr]

    def load_scalars(self, vals):
        self.lr = float(vals[0])


class RmsProp:
    kind = "rmsprop"
    default_lr = 1e-3

    def __init__(self, params, lr=None, decay=0.9, eps=1e-8):
        self.lr = self.default_lr if lr is None else float(lr)
        self.decay = float(decay)
        self.eps = float(eps)
        self.sq = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        for p, g, s in zip(params, grads, self.sq):
            if g is None:
                continue
            s *= self.decay
            s += (1.0 - self.decay) * g * g
            p -= self.lr * g / np.sqrt(s + self.eps)

    def state_arrays(self):
        return list(self.sq)

    def scalars(self):
        return [self.lr, self.decay, self.eps]

    def load_scalars(self, vals):
        self.lr, self.decay, self.eps = (float(v) for v in vals)


class Adam:
    kind = "adam"
    default_lr = 1e-3

    def __init__(self, params, lr=None, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = self.default_lr if lr is None else float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if g is None:
                continue
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_arrays(self):
        return list(self.m) + list(self.v)

    def scalars(self):
        return [self.lr, self.beta1, self.beta2, self.eps, float(self.t)]

    def load_scalars(self, vals):
        self.lr, self.beta1, self.beta2, self.eps = (float(v) for v in vals[:4])
        self.t = int(vals[4])


_KINDS = {cls.kind: cls for cls in (Sgd, RmsProp, Adam)}


def create_optimizer(name, params, lr=None):
    try:
        cls = _KINDS[name]
    except KeyError:
        raise ValueError(f"unknown optimizer {name!r}") from None
    return cls(params, lr=lr)


def optimizer_kinds():
    return tuple(_KINDS)
