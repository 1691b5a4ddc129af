"""Finite-difference verification of the analytic gradients.

Relative error is measured per parameter block in the infinity norm:
max|analytic - numeric| / max(max|analytic|, max|numeric|, floor). Central
differences evaluate only the forward quantities (joint log-probability,
critic score), so they are an independent route against the analytic code.
"""

from __future__ import annotations

import numpy as np

from .beliefnet import BeliefNet, ChainSample, ConvBeliefLayer, grad_log_joint, log_joint, sample_forward
from .discriminator import MlpDiscriminator, disc_backward, disc_forward
from .numcore import RngStream


def central_diff(fn, arrays, step=1e-5):
    """d fn / d arrays by central differences, one list entry per array.
    Skips None entries (structurally absent parameters)."""
    grads = []
    for arr in arrays:
        if arr is None:
            grads.append(None)
            continue
        g = np.zeros_like(arr)
        flat = arr.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = fn()
            flat[i] = orig - step
            down = fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * step)
        grads.append(g)
    return grads


def block_rel_error(analytic, numeric, floor=1e-8) -> float:
    """Infinity-norm relative error between two gradient blocks."""
    scale = max(float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))), floor)
    return float(np.max(np.abs(analytic - numeric))) / scale


def max_rel_error(analytic_list, numeric_list, floor=1e-8) -> float:
    errs = [
        block_rel_error(a, n, floor)
        for a, n in zip(analytic_list, numeric_list)
        if a is not None
    ]
    return max(errs) if errs else 0.0


def check_net_gradient(net: BeliefNet, chain: ChainSample, step=1e-5) -> float:
    """Max relative error of grad_log_joint against central differences."""
    analytic = grad_log_joint(net, chain).arrays()
    params = net.param_arrays()
    if net.clamped:
        params = [None] + params[1:]
    numeric = central_diff(lambda: log_joint(net, chain), params, step)
    return max_rel_error(analytic, numeric)


def check_disc_gradient(disc: MlpDiscriminator, x, upstream=1.0, step=1e-5) -> float:
    """Max relative error of disc_backward against central differences."""
    analytic = disc_backward(disc, x, upstream).arrays()
    numeric = central_diff(lambda: upstream * disc_forward(disc, x), disc.param_arrays(), step)
    return max_rel_error(analytic, numeric)


def random_dense_net(rng: RngStream, max_layers=4, max_units=6) -> BeliefNet:
    n_layers = 2 + int(rng.integers(0, max_layers - 1, 1)[0])
    sizes = [1 + int(s) for s in rng.integers(1, max_units, n_layers)]
    return BeliefNet.dense(sizes, rng)


def random_conv_net(rng: RngStream) -> BeliefNet:
    side = 3 + int(rng.integers(0, 3, 1)[0])
    k = 2 + int(rng.integers(0, 2, 1)[0])
    n_filters = 1 + int(rng.integers(0, 2, 1)[0])
    conv = ConvBeliefLayer(
        rng.normals(n_filters, 1, k, k) * 0.1,
        np.zeros(n_filters),
        (1, side, side),
        stride=1,
    )
    d_in = side * side
    return BeliefNet(rng.normals(d_in) * 0.1, [conv])


def run_battery(seed=0, n_dense=10, n_conv=3, n_disc=5, step=1e-5):
    """Gradient checks over randomized models; returns rows of
    (name, max_rel_error, passed) with the pass bar at 1e-6."""
    root = RngStream(seed)
    rows = []
    for i in range(n_dense):
        rng = root.derive(1, i)
        net = random_dense_net(rng)
        chain = sample_forward(net, rng.derive(99))
        err = check_net_gradient(net, chain, step)
        rows.append((f"dense[{','.join(map(str, net.dims))}]", err, err <= 1e-6))
    for i in range(n_conv):
        rng = root.derive(2, i)
        net = random_conv_net(rng)
        chain = sample_forward(net, rng.derive(99))
        err = check_net_gradient(net, chain, step)
        rows.append((f"conv[{','.join(map(str, net.dims))}]", err, err <= 1e-6))
    for i in range(n_disc):
        rng = root.derive(3, i)
        d_in = 2 + int(rng.integers(0, 5, 1)[0])
        head = "sigmoid" if i % 2 == 0 else "identity"
        disc = MlpDiscriminator.create([d_in, 8, 1], head=head, rng=rng)
        x = (rng.uniforms(d_in) < 0.5).astype(np.float64)
        err = check_disc_gradient(disc, x, upstream=1.5, step=step)
        rows.append((f"critic[{d_in},8,1]/{head}", err, err <= 1e-6))
    return rows
