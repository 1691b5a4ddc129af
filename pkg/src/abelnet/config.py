"""Run configuration: a strict key=value file format with command-line
overrides. Unknown keys are errors, never silently ignored."""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, fields

from .optim import optimizer_kinds


class ConfigError(ValueError):
    pass


def _parse_bool(text):
    t = text.strip().lower()
    if t in ("true", "1", "yes", "on"):
        return True
    if t in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _parse_int_list(text):
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated integer list, got {text!r}") from None


_CONV_RE = re.compile(
    r"conv\(in=(\d+)x(\d+)x(\d+),f=(\d+),k=(\d+)(?:,s=(\d+))?\)"
)


@dataclass
class ConvSpec:
    channels: int
    height: int
    width: int
    filters: int
    kernel: int
    stride: int = 1


def parse_layer_spec(text):
    """Architecture tokens: an integer for a dense layer, or
    conv(in=CxHxW,f=F,k=K[,s=S]) for a convolutional one. The first token
    must be an integer (the input layer width)."""
    tokens = []
    for raw in re.split(r",(?![^()]*\))", text):  # commas outside parentheses
        tok = raw.strip()
        if not tok:
            continue
        if tok.isdigit():
            tokens.append(int(tok))
            continue
        m = _CONV_RE.fullmatch(tok)
        if not m:
            raise ConfigError(f"bad layer token {tok!r}")
        c, h, w, f, k, s = (int(g) if g else None for g in m.groups())
        tokens.append(ConvSpec(c, h, w, f, k, s or 1))
    if not tokens:
        raise ConfigError("empty layer specification")
    if not isinstance(tokens[0], int):
        raise ConfigError("the first layer token must be the input width")
    return tokens


@dataclass
class RunConfig:
    # architecture
    dbn_layers: list | None = None
    disc_layers: list | None = None
    conditional: bool = False
    classes: int = 10
    # data
    data_kind: str | None = None  # digits_csv | spikes_csv | idx | synth_spikes
    data_path: str | None = None
    labels_path: str | None = None
    binarize_threshold: float | None = None
    spike_neurons: int = 50
    spike_frames: int = 100000
    spike_base_rate: float = 0.008
    spike_drive_prob: float = 0.05
    spike_drive_rate: float = 0.05
    # training
    loss: str = "js"
    optimizer: str = "adam"
    optimizer_gen: str | None = None
    optimizer_disc: str | None = None
    lr_gen: float | None = None
    lr_disc: float | None = None
    batch: int = 32
    iters: int = 10000
    critic_steps: int | None = None
    clip: float = 0.01
    seed: int = 0
    eval_every: int = 100
    checkpoint_every: int = 0  # 0 = final checkpoint only
    workers: int = 1
    baseline: bool = False
    # sampling / evaluation
    sample_count: int = 100
    grid_cols: int = 10
    loglik_draws: int = 1000
    eval_count: int = 64
    # io
    out: str | None = None
    checkpoint: str | None = None


_PARSERS = {
    "dbn_layers": parse_layer_spec,
    "disc_layers": _parse_int_list,
    "conditional": _parse_bool,
    "classes": int,
    "data_kind": str,
    "data_path": str,
    "labels_path": str,
    "binarize_threshold": float,
    "spike_neurons": int,
    "spike_frames": int,
    "spike_base_rate": float,
    "spike_drive_prob": float,
    "spike_drive_rate": float,
    "loss": str,
    "optimizer": str,
    "optimizer_gen": str,
    "optimizer_disc": str,
    "lr_gen": float,
    "lr_disc": float,
    "batch": int,
    "iters": int,
    "critic_steps": int,
    "clip": float,
    "seed": int,
    "eval_every": int,
    "checkpoint_every": int,
    "workers": int,
    "baseline": _parse_bool,
    "sample_count": int,
    "grid_cols": int,
    "loglik_draws": int,
    "eval_count": int,
    "out": str,
    "checkpoint": str,
}

_DATA_KINDS = ("digits_csv", "spikes_csv", "idx", "synth_spikes")
_LOSSES = ("js", "wasserstein", "mal", "mal-hybrid")


def parse_config(path=None, overrides=None) -> RunConfig:
    """Build a RunConfig from an optional key=value file plus overrides
    (override values may be already-typed or strings)."""
    cfg = RunConfig()
    if path is not None:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key = value")
                key, _, value = line.partition("=")
                key = key.strip()
                value = value.strip()
                if key not in _PARSERS:
                    raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
                try:
                    setattr(cfg, key, _PARSERS[key](value))
                except ConfigError:
                    raise
                except ValueError:
                    raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    for key, value in (overrides or {}).items():
        if key not in _PARSERS:
            raise ConfigError(f"unknown config key {key!r}")
        if value is None:
            continue
        setattr(cfg, key, _PARSERS[key](value) if isinstance(value, str) else value)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    if cfg.loss not in _LOSSES:
        raise ConfigError(f"loss must be one of {_LOSSES}, got {cfg.loss!r}")
    for name in ("optimizer", "optimizer_gen", "optimizer_disc"):
        v = getattr(cfg, name)
        if v is not None and v not in optimizer_kinds():
            raise ConfigError(f"{name} must be one of {optimizer_kinds()}, got {v!r}")
    if cfg.data_kind is not None and cfg.data_kind not in _DATA_KINDS:
        raise ConfigError(f"data_kind must be one of {_DATA_KINDS}, got {cfg.data_kind!r}")
    for name in ("batch", "iters", "eval_every", "workers", "sample_count",
                 "loglik_draws", "eval_count", "classes"):
        if int(getattr(cfg, name)) < 1:
            raise ConfigError(f"{name} must be >= 1")
    if cfg.checkpoint_every < 0:
        raise ConfigError("checkpoint_every must be >= 0")
    if not cfg.clip > 0:
        raise ConfigError("clip must be positive")
    if cfg.dbn_layers is not None:
        _validate_architecture(cfg)


def _validate_architecture(cfg: RunConfig):
    tokens = list(cfg.dbn_layers)
    if cfg.conditional:
        tokens = [int(cfg.classes)] + tokens
    d = None
    for tok in tokens:
        if isinstance(tok, int):
            if tok < 1:
                raise ConfigError("layer sizes must be positive")
            d = tok
        else:
            need = tok.channels * tok.height * tok.width
            if d is not None and need != d:
                raise ConfigError(
                    f"conv layer expects {need} inputs, previous layer gives {d}"
                )
            if tok.kernel > tok.height or tok.kernel > tok.width:
                raise ConfigError("conv kernel larger than its input")
            out_h = (tok.height - tok.kernel) // tok.stride + 1
            out_w = (tok.width - tok.kernel) // tok.stride + 1
            d = tok.filters * out_h * out_w
    if cfg.disc_layers is not None:
        if len(cfg.disc_layers) < 2 or cfg.disc_layers[-1] != 1:
            raise ConfigError("disc_layers must end in 1")
        expected = d + (int(cfg.classes) if cfg.conditional else 0)
        if cfg.disc_layers[0] != expected:
            raise ConfigError(
                f"disc_layers input is {cfg.disc_layers[0]}, data implies {expected}"
            )


def architecture_dims(cfg: RunConfig):
    """Full layer-size chain, with the label width prepended in conditional
    mode."""
    tokens = list(cfg.dbn_layers or [])
    if cfg.conditional:
        tokens = [int(cfg.classes)] + tokens
    return tokens


def resolved_out_dir(cfg: RunConfig, command: str) -> str:
    if cfg.out:
        return cfg.out
    root = os.environ.get("ABELNET_OUT", ".")
    return os.path.join(root, f"{command}_out")


def config_as_dict(cfg: RunConfig) -> dict:
    out = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, list):
            v = [vars(t) if isinstance(t, ConvSpec) else t for t in v]
        out[f.name] = v
    return out
