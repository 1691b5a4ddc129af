"""Saddle-point training: loss pairs, the two mini-batch gradient
estimators, the alternating update loop, and an exact objective for
enumerable networks.

The objective is  mean_real[real_term(f(x))] + E_model[fake_term(f(y))];
the critic ascends it, the generator descends it. The generator gradient
uses the likelihood-ratio form: each sampled chain contributes
fake_term(f(output)) times the gradient of its joint log-probability, so no
derivative ever flows through the sampling path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .beliefnet import (
    BeliefNet,
    BeliefNetGrad,
    all_bit_vectors,
    batch_weighted_grad,
    chains_from_states,
    enumerate_output_pmf,
    sample_forward_batch,
)
from .discriminator import (
    DiscGrad,
    MlpDiscriminator,
    clip_weights,
    disc_forward_batch,
    disc_value_and_grad,
)
from .numcore import RngStream, as_bits
from .optim import create_optimizer

LOG_EPS = 1e-7  # log-argument floor for the sigmoid-headed losses

# stream derivation tags, one per draw site in a training step
_REAL, _CRITIC_FAKE, _CRITIC_LABEL, _GEN_FAKE, _GEN_LABEL = range(1, 6)


class TrainingDiverged(RuntimeError):
    """Raised when a non-finite score or gradient shows up mid-training."""


def _log_floor(y):
    return np.log(np.maximum(y, LOG_EPS))


def _d_log_floor(y):
    return np.where(y > LOG_EPS, 1.0 / np.maximum(y, LOG_EPS), 0.0)


@dataclass(frozen=True)
class LossPair:
    """The two scalar terms of the adversarial objective and their
    derivatives. ``real_term`` weighs critic scores on data samples,
    ``fake_term`` weighs scores on generated samples."""

    name: str
    head: str  # required critic output activation
    real_term: callable
    fake_term: callable
    d_real: callable
    d_fake: callable
    clip: float | None = None


def make_loss_pair(name: str, clip: float | None = None) -> LossPair:
    """js, wasserstein, or mal (accepts "mal-hybrid" as an alias)."""
    if name == "js":
        return LossPair(
            "js",
            "sigmoid",
            real_term=_log_floor,
            fake_term=lambda y: _log_floor(1.0 - y),
            d_real=_d_log_floor,
            d_fake=lambda y: -_d_log_floor(1.0 - y),
        )
    if name == "wasserstein":
        return LossPair(
            "wasserstein",
            "identity",
            real_term=lambda y: np.asarray(y, dtype=np.float64),
            fake_term=lambda y: -np.asarray(y, dtype=np.float64),
            d_real=lambda y: np.ones_like(y),
            d_fake=lambda y: -np.ones_like(y),
            clip=0.01 if clip is None else float(clip),
        )
    if name in ("mal", "mal-hybrid"):
        return LossPair(
            "mal",
            "sigmoid",
            real_term=_log_floor,
            fake_term=lambda y: -np.asarray(y, dtype=np.float64),
            d_real=_d_log_floor,
            d_fake=lambda y: -np.ones_like(y),
        )
    raise ValueError(f"unknown loss pair {name!r}")


@dataclass
class GradEstimate:
    """One stochastic gradient: generator part (None when identically zero,
    as for real batches), critic part, and the critic scores that produced
    it (kept for logging)."""

    gen: BeliefNetGrad | None
    disc: DiscGrad
    scores: np.ndarray


def real_batch_grad(disc: MlpDiscriminator, loss: LossPair, xs) -> GradEstimate:
    """Gradient estimate from a batch of data samples.

    The generator part is identically zero (the data term does not involve
    the generator); the critic part is the batch mean of
    d_real(f(x)) * d f(x) / d params.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    if xs.shape[0] == 0:
        raise ValueError("real batch must be non-empty")
    n = xs.shape[0]
    scores, g = disc_value_and_grad(disc, xs, lambda s: loss.d_real(s) / n)
    return GradEstimate(gen=None, disc=g, scores=scores)


def fake_batch_grad(
    net: BeliefNet,
    disc: MlpDiscriminator,
    loss: LossPair,
    n_chains: int,
    rng: RngStream,
    conditions=None,
    workers: int = 1,
    baseline: bool = False,
):
    """Gradient estimate from ``n_chains`` freshly sampled chains.

    Returns (estimate, chains). The generator part is the batch mean of
    fake_term(f(y_i)) * d log p(chain_i) / d theta; the critic part mirrors
    the real-batch rule with d_fake. For a clamped-input network the critic
    scores the (condition, output) concatenation.

    ``baseline=True`` subtracts the batch mean of fake_term(f(y)) from the
    per-chain weights. That is a variance-reduction departure from the plain
    estimator and is off by default.
    """
    if n_chains < 1:
        raise ValueError("need at least one chain")
    if conditions is not None and not net.clamped:
        raise ValueError("conditions are only meaningful for a clamped-input network")
    states, probs = sample_forward_batch(net, rng, n_chains, conditions=conditions)
    ys = states[-1]
    disc_in = np.concatenate([states[0], ys], axis=1) if net.clamped else ys
    scores, g_disc = disc_value_and_grad(disc, disc_in, lambda s: loss.d_fake(s) / n_chains)
    w = loss.fake_term(scores)
    if baseline:
        w = w - w.mean()
    g_gen = batch_weighted_grad(net, states, w / n_chains, probs=probs, workers=workers)
    est = GradEstimate(gen=g_gen, disc=g_disc, scores=scores)
    return est, chains_from_states(states)


def exact_objective(net: BeliefNet, disc: MlpDiscriminator, loss: LossPair, xs) -> float:
    """Objective value with the model expectation taken exactly, via full
    enumeration of the output distribution. Enumeration guard applies."""
    pmf = enumerate_output_pmf(net)
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    real = float(np.mean(loss.real_term(disc_forward_batch(disc, xs))))
    outs = all_bit_vectors(pmf.dim)
    fake = float(pmf.probs @ loss.fake_term(disc_forward_batch(disc, outs)))
    return real + fake


@dataclass
class TrainConfig:
    batch_size: int = 32
    iterations: int = 1000
    loss: str = "js"
    critic_steps: int | None = None  # default: 1, or 5 for wasserstein
    optimizer_gen: str = "adam"
    optimizer_disc: str = "adam"
    lr_gen: float | None = None
    lr_disc: float | None = None
    clip: float = 0.01
    seed: int = 0
    eval_every: int = 100
    workers: int = 1
    baseline: bool = False

    def __post_init__(self):
        for name in ("batch_size", "iterations", "eval_every", "workers"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.critic_steps is not None and int(self.critic_steps) < 1:
            raise ValueError("critic_steps must be >= 1")
        for name in ("lr_gen", "lr_disc"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be non-negative")
        if not self.clip > 0:
            raise ValueError("clip must be positive")

    def resolved_critic_steps(self) -> int:
        if self.critic_steps is not None:
            return int(self.critic_steps)
        return 5 if self.loss == "wasserstein" else 1


@dataclass
class MetricRow:
    iteration: int
    loss_total: float
    loss_gen: float
    score_real_mean: float
    score_fake_mean: float
    gtheta_norm: float
    grho_norm: float


CSV_HEADER = "iter,loss_total,score_real_mean,score_fake_mean,gtheta_norm,grho_norm"


def metrics_csv_lines(log) -> list[str]:
    lines = [CSV_HEADER]
    for r in log:
        lines.append(
            f"{r.iteration},{r.loss_total!r},{r.score_real_mean!r},"
            f"{r.score_fake_mean!r},{r.gtheta_norm!r},{r.grho_norm!r}"
        )
    return lines


@dataclass
class TrainerState:
    net: BeliefNet
    disc: MlpDiscriminator
    loss: LossPair
    samples: np.ndarray
    labels: np.ndarray | None
    opt_gen: object
    opt_disc: object
    root: RngStream
    t: int = 0
    log: list = field(default_factory=list)

    @property
    def conditional(self):
        return self.net.clamped


def init_trainer(net: BeliefNet, disc: MlpDiscriminator, dataset, config: TrainConfig) -> TrainerState:
    """Wire up a training session; validates that the critic head matches the
    loss and that shapes line up (conditional mode concatenates a one-hot
    label of width dims[0] in front of each sample)."""
    samples = as_bits(getattr(dataset, "samples", dataset))
    labels = getattr(dataset, "labels", None)
    if samples.ndim != 2 or samples.shape[0] == 0:
        raise ValueError("dataset must be a non-empty (n, d) binary array")
    loss = make_loss_pair(config.loss, clip=config.clip)
    if disc.head != loss.head:
        raise ValueError(
            f"loss {loss.name!r} needs a {loss.head!r} critic head, got {disc.head!r}"
        )
    d_out = net.dims[-1]
    if samples.shape[1] != d_out:
        raise ValueError(f"samples have {samples.shape[1]} bits, network emits {d_out}")
    expected_in = d_out + (net.dims[0] if net.clamped else 0)
    if disc.input_dim != expected_in:
        raise ValueError(f"critic expects inputs of {disc.input_dim}, data provides {expected_in}")
    if net.clamped:
        if labels is None:
            raise ValueError("conditional training needs labelled data")
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (samples.shape[0],):
            raise ValueError("need one label per sample")
        if labels.min() < 0 or labels.max() >= net.dims[0]:
            raise ValueError("labels out of range for the input layer width")
    return TrainerState(
        net=net,
        disc=disc,
        loss=loss,
        samples=samples,
        labels=labels if net.clamped else None,
        opt_gen=create_optimizer(config.optimizer_gen, net.param_arrays(), lr=config.lr_gen),
        opt_disc=create_optimizer(config.optimizer_disc, disc.param_arrays(), lr=config.lr_disc),
        root=RngStream(config.seed),
    )


def _one_hot_rows(labels, classes):
    out = np.zeros((len(labels), classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def _negated(arrays):
    return [None if a is None else -a for a in arrays]


def _check_scores(scores, what):
    if not np.all(np.isfinite(scores)):
        raise TrainingDiverged(f"non-finite critic scores in {what}")


def train_step(state: TrainerState, config: TrainConfig) -> TrainerState:
    """One alternating update: ``critic_steps`` ascent steps on the critic
    (each from one real and one fresh fake batch, clipping afterwards in
    wasserstein mode), then one descent step on the generator from another
    fresh fake batch. Appends a metric row every ``eval_every`` iterations.
    """
    t = state.t + 1
    b = config.batch_size
    n_data = state.samples.shape[0]
    classes = state.net.dims[0] if state.conditional else 0

    r_est = f_est = None
    g_disc_total = None
    for s in range(config.resolved_critic_steps()):
        idx = state.root.derive(t, _REAL, s).integers(0, n_data, b)
        xs = state.samples[idx]
        if state.conditional:
            xs = np.concatenate([_one_hot_rows(state.labels[idx], classes), xs], axis=1)
        r_est = real_batch_grad(state.disc, state.loss, xs)
        _check_scores(r_est.scores, "real batch")

        conds = None
        if state.conditional:
            fake_labels = state.root.derive(t, _CRITIC_LABEL, s).integers(0, classes, b)
            conds = _one_hot_rows(fake_labels, classes)
        f_est, _ = fake_batch_grad(
            state.net, state.disc, state.loss, b,
            state.root.derive(t, _CRITIC_FAKE, s),
            conditions=conds, workers=config.workers,
        )
        _check_scores(f_est.scores, "critic fake batch")

        g_disc_total = r_est.disc.add(f_est.disc)
        state.opt_disc.step(state.disc.param_arrays(), _negated(g_disc_total.arrays()))
        if state.loss.name == "wasserstein":
            clip_weights(state.disc, config.clip)

    conds = None
    if state.conditional:
        fake_labels = state.root.derive(t, _GEN_LABEL).integers(0, classes, b)
        conds = _one_hot_rows(fake_labels, classes)
    g_est, _ = fake_batch_grad(
        state.net, state.disc, state.loss, b,
        state.root.derive(t, _GEN_FAKE),
        conditions=conds, workers=config.workers, baseline=config.baseline,
    )
    _check_scores(g_est.scores, "generator fake batch")
    state.opt_gen.step(state.net.param_arrays(), g_est.gen.arrays())

    state.t = t
    if t % config.eval_every == 0:
        real_term = float(np.mean(state.loss.real_term(r_est.scores)))
        fake_term = float(np.mean(state.loss.fake_term(f_est.scores)))
        row = MetricRow(
            iteration=t,
            loss_total=real_term + fake_term,
            loss_gen=fake_term,
            score_real_mean=float(r_est.scores.mean()),
            score_fake_mean=float(f_est.scores.mean()),
            gtheta_norm=g_est.gen.norm(),
            grho_norm=g_disc_total.norm(),
        )
        if not all(np.isfinite(v) for v in (row.loss_total, row.gtheta_norm, row.grho_norm)):
            raise TrainingDiverged(f"non-finite metrics at iteration {t}")
        state.log.append(row)
    return state


def train(state: TrainerState, config: TrainConfig, on_step=None) -> TrainerState:
    """Run train_step until ``config.iterations`` is reached."""
    while state.t < config.iterations:
        train_step(state, config)
        if on_step is not None:
            on_step(state)
    return state
