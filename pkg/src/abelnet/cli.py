"""Command-line front end: train, sample, eval, gradcheck, bench-parallel.

Every command writes only inside its output directory and drops a
manifest.json there (resolved config, seed, backend, artifact hashes) so a
run can be reproduced exactly. Failures exit non-zero with a single-line
error on stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import _kernels, __version__
from .adversarial import TrainConfig, init_trainer, metrics_csv_lines, train
from .beliefnet import BeliefNet, ConvBeliefLayer, DenseBeliefLayer, sample_forward_batch
from .bench import bench_csv_lines, run_bench
from .config import (
    ConfigError,
    RunConfig,
    architecture_dims,
    config_as_dict,
    parse_config,
    resolved_out_dir,
)
from .datasets import (
    BinaryDataset,
    dataset_from_images,
    load_digits_csv,
    load_idx,
    load_spikes_csv,
    synth_spikes,
)
from .gradcheck import run_battery
from .metrics import firing_rates, loglik_estimate_many
from .numcore import RngStream, stable_sigmoid
from .pgm import tile_grid, to_gray, write_pgm
from .serialize import load_checkpoint, save_checkpoint


class CliError(ValueError):
    pass


def _load_dataset(cfg: RunConfig) -> BinaryDataset:
    kind = cfg.data_kind
    if kind is None:
        raise CliError("no dataset configured (set data_kind)")
    if kind == "digits_csv":
        if not cfg.data_path:
            raise CliError("digits_csv needs data_path")
        threshold = 8 if cfg.binarize_threshold is None else cfg.binarize_threshold
        return load_digits_csv(cfg.data_path, threshold=threshold)
    if kind == "spikes_csv":
        if not cfg.data_path:
            raise CliError("spikes_csv needs data_path")
        return load_spikes_csv(cfg.data_path).as_dataset()
    if kind == "idx":
        if not cfg.data_path:
            raise CliError("idx needs data_path")
        images = load_idx(cfg.data_path)
        if images.ndim != 3:
            raise CliError("data_path must be an IDX image file")
        labels = None
        if cfg.labels_path:
            labels = load_idx(cfg.labels_path)
            if labels.ndim != 1:
                raise CliError("labels_path must be an IDX label file")
        threshold = 127 if cfg.binarize_threshold is None else cfg.binarize_threshold
        return dataset_from_images(images, labels=labels, threshold=threshold)
    if kind == "synth_spikes":
        trains = synth_spikes(
            cfg.spike_neurons,
            cfg.spike_frames,
            cfg.spike_base_rate,
            cfg.spike_drive_prob,
            seed=cfg.seed,
            drive_rate=cfg.spike_drive_rate,
        )
        return trains.as_dataset()
    raise CliError(f"unknown data_kind {kind!r}")


def _build_net(cfg: RunConfig, rng: RngStream) -> BeliefNet:
    tokens = architecture_dims(cfg)
    if not tokens:
        raise CliError("no architecture configured (set dbn_layers)")
    input_bias = np.zeros(int(tokens[0]))
    layers = []
    d = int(tokens[0])
    for tok in tokens[1:]:
        if isinstance(tok, int):
            layers.append(DenseBeliefLayer(rng.normals(tok, d) * 0.1, np.zeros(tok)))
            d = tok
        else:
            conv = ConvBeliefLayer(
                rng.normals(tok.filters, tok.channels, tok.kernel, tok.kernel) * 0.1,
                np.zeros(tok.filters),
                (tok.channels, tok.height, tok.width),
                stride=tok.stride,
            )
            layers.append(conv)
            d = conv.out_dim
    net = BeliefNet(input_bias, layers)
    return net.clamp() if cfg.conditional else net


def _build_disc(cfg: RunConfig, d_out: int, rng: RngStream):
    from .discriminator import MlpDiscriminator

    head = "identity" if cfg.loss == "wasserstein" else "sigmoid"
    sizes = cfg.disc_layers
    if sizes is None:
        d_in = d_out + (int(cfg.classes) if cfg.conditional else 0)
        sizes = [d_in, 64, 1]
    return MlpDiscriminator.create(sizes, head=head, rng=rng)


def _train_config(cfg: RunConfig) -> TrainConfig:
    return TrainConfig(
        batch_size=cfg.batch,
        iterations=cfg.iters,
        loss="mal" if cfg.loss == "mal-hybrid" else cfg.loss,
        critic_steps=cfg.critic_steps,
        optimizer_gen=cfg.optimizer_gen or cfg.optimizer,
        optimizer_disc=cfg.optimizer_disc or cfg.optimizer,
        lr_gen=cfg.lr_gen,
        lr_disc=cfg.lr_disc,
        clip=cfg.clip,
        seed=cfg.seed,
        eval_every=cfg.eval_every,
        workers=cfg.workers,
        baseline=cfg.baseline,
    )


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_manifest(out_dir, command, cfg, artifacts):
    manifest = {
        "command": command,
        "package_version": __version__,
        "kernel_backend": _kernels.backend_name(),
        "seed": cfg.seed,
        "config": config_as_dict(cfg),
        "artifacts": {name: _sha256(os.path.join(out_dir, name)) for name in artifacts},
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_lines(path, lines):
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def cmd_train(cfg: RunConfig) -> int:
    out_dir = resolved_out_dir(cfg, "train")
    os.makedirs(out_dir, exist_ok=True)
    dataset = _load_dataset(cfg)
    tconf = _train_config(cfg)

    if cfg.checkpoint:
        net, disc, opt_gen, opt_disc, start_iter, seed = load_checkpoint(cfg.checkpoint)
        if seed != cfg.seed:
            raise CliError(f"checkpoint was produced with seed {seed}, config says {cfg.seed}")
        state = init_trainer(net, disc, dataset, tconf)
        state.opt_gen, state.opt_disc, state.t = opt_gen, opt_disc, start_iter
    else:
        root = RngStream(cfg.seed)
        net = _build_net(cfg, root.derive(1000001))
        disc = _build_disc(cfg, net.dims[-1], root.derive(1000002))
        state = init_trainer(net, disc, dataset, tconf)

    artifacts = []

    def snapshot(tag):
        name = f"checkpoint_{tag}.abck"
        save_checkpoint(
            os.path.join(out_dir, name),
            state.net, state.disc, state.opt_gen, state.opt_disc, state.t, cfg.seed,
        )
        artifacts.append(name)

    def on_step(st):
        if cfg.checkpoint_every and st.t % cfg.checkpoint_every == 0 and st.t < tconf.iterations:
            snapshot(f"{st.t:08d}")

    train(state, tconf, on_step=on_step)
    snapshot("final")
    _write_lines(os.path.join(out_dir, "metrics.csv"), metrics_csv_lines(state.log))
    artifacts.append("metrics.csv")
    _write_manifest(out_dir, "train", cfg, artifacts)
    print(f"trained {state.t} iterations; artifacts in {out_dir}")
    return 0


def _image_shape(cfg: RunConfig, d: int):
    if cfg.data_kind == "digits_csv":
        return (8, 8)
    side = int(np.sqrt(d))
    if side * side == d:
        return (side, side)
    return (1, d)


def cmd_sample(cfg: RunConfig) -> int:
    if not cfg.checkpoint:
        raise CliError("sample needs --checkpoint")
    out_dir = resolved_out_dir(cfg, "sample")
    os.makedirs(out_dir, exist_ok=True)
    net, disc, *_ = load_checkpoint(cfg.checkpoint)
    rng = RngStream(cfg.seed).derive(7)
    n = cfg.sample_count
    if net.clamped:
        classes = net.dims[0]
        per_class = max(1, n // classes)
        conds = np.zeros((per_class * classes, classes))
        for c in range(classes):
            conds[c * per_class : (c + 1) * per_class, c] = 1.0
        states, probs = sample_forward_batch(net, rng, conds.shape[0], conditions=conds)
        cols = per_class
    else:
        states, probs = sample_forward_batch(net, rng, n)
        cols = cfg.grid_cols
    h, w = _image_shape(cfg, net.dims[-1])
    bits = states[-1].reshape(-1, h, w)
    if probs[-1] is None:  # no transitional layers: marginal is sigmoid(bias)
        gray = np.broadcast_to(stable_sigmoid(net.input_bias), states[-1].shape)
    else:
        gray = probs[-1]
    gray = gray.reshape(-1, h, w)
    write_pgm(os.path.join(out_dir, "samples.pgm"), tile_grid(bits, cols))
    write_pgm(os.path.join(out_dir, "probs.pgm"), tile_grid(gray, cols))
    _write_manifest(out_dir, "sample", cfg, ["samples.pgm", "probs.pgm"])
    print(f"wrote {bits.shape[0]} samples to {out_dir}")
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    if not cfg.checkpoint:
        raise CliError("eval needs --checkpoint")
    out_dir = resolved_out_dir(cfg, "eval")
    os.makedirs(out_dir, exist_ok=True)
    net, disc, *_ = load_checkpoint(cfg.checkpoint)
    dataset = _load_dataset(cfg)
    rng = RngStream(cfg.seed).derive(8)
    eval_net = net.free() if net.clamped else net

    n_eval = min(cfg.eval_count, len(dataset))
    eval_idx = rng.derive(0).integers(0, len(dataset), n_eval)
    eval_set = dataset.samples[eval_idx]
    logliks = loglik_estimate_many(eval_net, eval_set, cfg.loglik_draws, rng.derive(1))

    n_gen = max(2000, cfg.sample_count)
    states, _ = sample_forward_batch(eval_net, rng.derive(2), n_gen)
    model_rates = firing_rates(states[-1])
    data_rates = firing_rates(dataset.samples)
    mad = float(np.mean(np.abs(model_rates - data_rates)))

    lines = ["metric,index,value"]
    lines.append(f"loglik_mean,,{float(np.mean(logliks))!r}")
    lines.append(f"loglik_median,,{float(np.median(logliks))!r}")
    lines.append(f"marginal_mad,,{mad!r}")
    for i, (m, d) in enumerate(zip(model_rates, data_rates)):
        lines.append(f"firing_rate_model,{i},{float(m)!r}")
        lines.append(f"firing_rate_data,{i},{float(d)!r}")
    _write_lines(os.path.join(out_dir, "eval.csv"), lines)
    _write_manifest(out_dir, "eval", cfg, ["eval.csv"])
    print(f"eval: loglik_mean={float(np.mean(logliks)):.4f} marginal_mad={mad:.4f}")
    return 0


def cmd_gradcheck(cfg: RunConfig) -> int:
    out_dir = resolved_out_dir(cfg, "gradcheck")
    os.makedirs(out_dir, exist_ok=True)
    rows = run_battery(seed=cfg.seed)
    lines = ["model,max_rel_error,pass"]
    worst = 0.0
    for name, err, ok in rows:
        lines.append(f"{name},{err!r},{int(ok)}")
        worst = max(worst, err)
        print(f"{'PASS' if ok else 'FAIL'}  {name:<24} max_rel_error={err:.3e}")
    _write_lines(os.path.join(out_dir, "gradcheck.csv"), lines)
    _write_manifest(out_dir, "gradcheck", cfg, ["gradcheck.csv"])
    all_ok = all(ok for _, _, ok in rows)
    print(f"gradcheck {'passed' if all_ok else 'FAILED'} (worst {worst:.3e})")
    return 0 if all_ok else 1


def cmd_bench_parallel(cfg: RunConfig) -> int:
    out_dir = resolved_out_dir(cfg, "bench-parallel")
    os.makedirs(out_dir, exist_ok=True)
    worker_counts = sorted({1, 2, cfg.workers} | ({4} if cfg.workers >= 4 else set()))
    rows = run_bench(batch=cfg.batch if cfg.batch > 1 else 512,
                     workers=worker_counts, seed=cfg.seed)
    _write_lines(os.path.join(out_dir, "bench.csv"), bench_csv_lines(rows))
    _write_manifest(out_dir, "bench-parallel", cfg, ["bench.csv"])
    ok = True
    for r in rows:
        flag = "ok" if r.equal_serial else "MISMATCH"
        ok = ok and r.equal_serial
        print(f"{r.backend:<7} workers={r.workers} {r.seconds * 1e3:8.2f} ms "
              f"speedup={r.speedup:5.2f} bitwise={flag}")
    if not ok:
        raise CliError("parallel gradient differs from the serial gradient")
    return 0


def _add_common_flags(p):
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--seed", type=int, help="root random seed")
    p.add_argument("--out", help="output directory (default $ABELNET_OUT/<command>_out)")
    p.add_argument("--workers", type=int, help="worker threads for per-layer gradients")
    p.add_argument("--loss", choices=["js", "wasserstein", "mal"], help="loss pair")
    p.add_argument("--optimizer", choices=["sgd", "rmsprop", "adam"], help="both players")
    p.add_argument("--iters", type=int, help="training iterations")
    p.add_argument("--batch", type=int, help="mini-batch size")
    p.add_argument("--clip", type=float, help="critic weight-clipping constant")
    p.add_argument("--checkpoint", help="checkpoint file to load (or resume from)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="abelnet",
        description="Adversarially trained sigmoid belief networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("train", cmd_train),
        ("sample", cmd_sample),
        ("eval", cmd_eval),
        ("gradcheck", cmd_gradcheck),
        ("bench-parallel", cmd_bench_parallel),
    ):
        p = sub.add_parser(name)
        _add_common_flags(p)
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {
        key: getattr(args, key.replace("-", "_"))
        for key in ("seed", "out", "workers", "loss", "optimizer", "iters",
                    "batch", "clip", "checkpoint")
        if getattr(args, key, None) is not None
    }
    try:
        cfg = parse_config(args.config, overrides)
        return args.fn(cfg)
    except Exception as exc:  # single-line machine-parsable failure
        message = str(exc).replace("\n", "; ")
        print(f"abelnet: error: {type(exc).__name__}: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
