"""Adversarially trained sigmoid belief networks.

The generator is a directed belief network sampled layer by layer; training
pits it against an MLP critic under a configurable loss pair (js,
wasserstein, mal) using a likelihood-ratio gradient estimator whose
per-layer terms are independent, hence parallelizable. Exact enumeration
oracles verify everything at desk scale.
"""

__version__ = "0.1.0"

from ._kernels import backend_name
from .adversarial import (
    GradEstimate,
    LossPair,
    TrainConfig,
    TrainerState,
    TrainingDiverged,
    exact_objective,
    fake_batch_grad,
    init_trainer,
    make_loss_pair,
    real_batch_grad,
    train,
    train_step,
)
from .beliefnet import (
    BeliefNet,
    BeliefNetGrad,
    ChainSample,
    ConvBeliefLayer,
    DenseBeliefLayer,
    EnumerationSizeError,
    clamp_input,
    enumerate_output_pmf,
    grad_log_joint,
    layer_cond_prob,
    log_joint,
    sample_forward,
    sample_forward_batch,
    sample_reverse,
)
from .datasets import (
    BinaryDataset,
    SpikeTrains,
    binarize,
    load_digits_csv,
    load_idx,
    load_spikes_csv,
    one_hot,
    synth_spikes,
)
from .discriminator import (
    DiscGrad,
    MlpDiscriminator,
    clip_weights,
    disc_backward,
    disc_forward,
    disc_forward_batch,
)
from .metrics import (
    PmfTable,
    empirical_pmf,
    firing_rates,
    loglik_estimate,
    loglik_estimate_many,
    marginals,
    tv_distance,
)
from .numcore import RngStream, bernoulli_vec, log_sigmoid_pair, stable_sigmoid
from .optim import Adam, RmsProp, Sgd, create_optimizer
