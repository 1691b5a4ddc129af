"""Flat binary container for models, optimizer state and checkpoints.

Layout: an 8-byte magic string, a little-endian uint32 format version and
record count, then a sequence of records. Each record is

    uint32 kind | uint32 n_shape | n_shape x uint32 shape ints |
    uint64 count | count x little-endian float64 payload

Round trips are bit-exact: payloads are the raw IEEE-754 bytes of the
arrays. Model files carry a leading meta record with the layer count;
checkpoints embed both models plus optimizer state and the iteration
counter, which together with the run seed is enough to resume exactly.
"""

from __future__ import annotations

import struct

import numpy as np

from .beliefnet import BeliefNet, ConvBeliefLayer, DenseBeliefLayer
from .discriminator import MlpDiscriminator
from .optim import Adam, RmsProp, Sgd

MAGIC = b"ABELNET\x00"
VERSION = 1

KIND_NET_META = 1
KIND_INPUT_BIAS = 2
KIND_CONDITION = 3
KIND_DENSE = 4
KIND_CONV = 5
KIND_DISC_META = 6
KIND_DISC_DENSE = 7
KIND_OPT_META = 8
KIND_OPT_ARRAY = 9
KIND_CKPT_META = 10

_ACT_CODES = {"identity": 0, "relu": 1, "sigmoid": 2}
_ACT_NAMES = {v: k for k, v in _ACT_CODES.items()}
_OPT_CODES = {"sgd": 0, "rmsprop": 1, "adam": 2}
_OPT_CLASSES = {0: Sgd, 1: RmsProp, 2: Adam}


class ContainerError(ValueError):
    pass


def _pack_record(kind, shape, payload):
    payload = np.ascontiguousarray(payload, dtype="<f8").ravel()
    head = struct.pack("<II", kind, len(shape))
    head += struct.pack(f"<{len(shape)}I", *[int(s) for s in shape])
    head += struct.pack("<Q", payload.size)
    return head + payload.tobytes()


def write_records(path, records):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(records)))
        for kind, shape, payload in records:
            fh.write(_pack_record(kind, shape, payload))


def read_records(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(MAGIC) + 8 or raw[: len(MAGIC)] != MAGIC:
        raise ContainerError(f"{path}: not a container file (bad magic)")
    version, count = struct.unpack_from("<II", raw, len(MAGIC))
    if version != VERSION:
        raise ContainerError(f"{path}: unsupported format version {version}")
    off = len(MAGIC) + 8
    records = []
    for _ in range(count):
        if off + 8 > len(raw):
            raise ContainerError(f"{path}: truncated record header")
        kind, n_shape = struct.unpack_from("<II", raw, off)
        off += 8
        if off + 4 * n_shape + 8 > len(raw):
            raise ContainerError(f"{path}: truncated record shape")
        shape = struct.unpack_from(f"<{n_shape}I", raw, off)
        off += 4 * n_shape
        (n_payload,) = struct.unpack_from("<Q", raw, off)
        off += 8
        nbytes = 8 * n_payload
        if off + nbytes > len(raw):
            raise ContainerError(f"{path}: truncated record payload")
        payload = np.frombuffer(raw, dtype="<f8", count=n_payload, offset=off).copy()
        off += nbytes
        records.append((kind, shape, payload))
    if off != len(raw):
        raise ContainerError(f"{path}: {len(raw) - off} trailing bytes")
    return records


def _net_records(net: BeliefNet):
    records = [
        (KIND_NET_META, (len(net.layers), 1 if net.clamped else 0,
                         1 if net.condition is not None else 0), []),
        (KIND_INPUT_BIAS, (net.input_bias.size,), net.input_bias),
    ]
    if net.condition is not None:
        records.append((KIND_CONDITION, (net.condition.size,), net.condition))
    for layer in net.layers:
        if isinstance(layer, DenseBeliefLayer):
            records.append(
                (KIND_DENSE, layer.w.shape, np.concatenate([layer.w.ravel(), layer.b]))
            )
        elif isinstance(layer, ConvBeliefLayer):
            f, c, k, _ = layer.filters.shape
            _, h, w = layer.input_shape
            records.append(
                (KIND_CONV, (f, c, k, h, w, layer.stride),
                 np.concatenate([layer.filters.ravel(), layer.biases]))
            )
        else:
            raise ContainerError(f"cannot serialize layer kind {layer.kind!r}")
    return records


def _net_from_records(records, pos):
    kind, shape, _ = records[pos]
    if kind != KIND_NET_META:
        raise ContainerError("expected a network meta record")
    n_layers, clamped, has_cond = shape
    pos += 1
    kind, shape, payload = records[pos]
    if kind != KIND_INPUT_BIAS:
        raise ContainerError("expected an input-bias record")
    input_bias = payload
    pos += 1
    condition = None
    if has_cond:
        kind, shape, payload = records[pos]
        if kind != KIND_CONDITION:
            raise ContainerError("expected a condition record")
        condition = payload
        pos += 1
    layers = []
    for _ in range(n_layers):
        kind, shape, payload = records[pos]
        pos += 1
        if kind == KIND_DENSE:
            d_out, d_in = shape
            w = payload[: d_out * d_in].reshape(d_out, d_in)
            layers.append(DenseBeliefLayer(w, payload[d_out * d_in:]))
        elif kind == KIND_CONV:
            f, c, k, h, w_in, stride = shape
            n_f = f * c * k * k
            filters = payload[:n_f].reshape(f, c, k, k)
            layers.append(ConvBeliefLayer(filters, payload[n_f:], (c, h, w_in), stride))
        else:
            raise ContainerError(f"unexpected record kind {kind} inside a network")
    mode = "clamped-input" if clamped else "free"
    return BeliefNet(input_bias, layers, clamp_mode=mode, condition=condition), pos


def _disc_records(disc: MlpDiscriminator):
    records = [(KIND_DISC_META, (len(disc.layers),), [])]
    for layer in disc.layers:
        records.append(
            (KIND_DISC_DENSE,
             (layer.w.shape[0], layer.w.shape[1], _ACT_CODES[layer.activation]),
             np.concatenate([layer.w.ravel(), layer.b]))
        )
    return records


def _disc_from_records(records, pos):
    kind, shape, _ = records[pos]
    if kind != KIND_DISC_META:
        raise ContainerError("expected a critic meta record")
    (n_layers,) = shape
    pos += 1
    layers = []
    for _ in range(n_layers):
        kind, shape, payload = records[pos]
        pos += 1
        if kind != KIND_DISC_DENSE:
            raise ContainerError(f"unexpected record kind {kind} inside a critic")
        d_out, d_in, act = shape
        w = payload[: d_out * d_in].reshape(d_out, d_in)
        layers.append((w, payload[d_out * d_in:], _ACT_NAMES[act]))
    return MlpDiscriminator(layers), pos


def _opt_records(opt):
    arrays = opt.state_arrays()
    records = [(KIND_OPT_META, (_OPT_CODES[opt.kind], len(arrays)), opt.scalars())]
    for a in arrays:
        records.append((KIND_OPT_ARRAY, a.shape, a))
    return records


def _opt_from_records(records, pos, params):
    kind, shape, payload = records[pos]
    if kind != KIND_OPT_META:
        raise ContainerError("expected an optimizer meta record")
    code, n_arrays = shape
    opt = _OPT_CLASSES[code](params)
    opt.load_scalars(payload)
    pos += 1
    arrays = []
    for _ in range(n_arrays):
        kind, shp, payload = records[pos]
        pos += 1
        if kind != KIND_OPT_ARRAY:
            raise ContainerError("expected an optimizer state record")
        arrays.append(payload.reshape(shp))
    own = opt.state_arrays()
    if len(own) != len(arrays):
        raise ContainerError("optimizer state does not match the parameter set")
    for dst, src in zip(own, arrays):
        if dst.shape != src.shape:
            raise ContainerError("optimizer state shape mismatch")
        dst[...] = src
    return opt, pos


def save_net(path, net: BeliefNet):
    write_records(path, _net_records(net))


def load_net(path) -> BeliefNet:
    net, pos = _net_from_records(read_records(path), 0)
    return net


def save_disc(path, disc: MlpDiscriminator):
    write_records(path, _disc_records(disc))


def load_disc(path) -> MlpDiscriminator:
    disc, pos = _disc_from_records(read_records(path), 0)
    return disc


def save_checkpoint(path, net, disc, opt_gen, opt_disc, iteration, seed):
    seed = int(seed)
    records = [(KIND_CKPT_META, (seed & 0xFFFFFFFF, (seed >> 32) & 0xFFFFFFFF),
                [float(iteration)])]
    records += _net_records(net)
    records += _disc_records(disc)
    records += _opt_records(opt_gen)
    records += _opt_records(opt_disc)
    write_records(path, records)


def load_checkpoint(path):
    """Returns (net, disc, opt_gen, opt_disc, iteration, seed)."""
    records = read_records(path)
    kind, shape, payload = records[0]
    if kind != KIND_CKPT_META:
        raise ContainerError(f"{path}: not a checkpoint file")
    seed = int(shape[0]) | (int(shape[1]) << 32)
    iteration = int(payload[0])
    net, pos = _net_from_records(records, 1)
    disc, pos = _disc_from_records(records, pos)
    opt_gen, pos = _opt_from_records(records, pos, net.param_arrays())
    opt_disc, pos = _opt_from_records(records, pos, disc.param_arrays())
    if pos != len(records):
        raise ContainerError(f"{path}: unexpected extra records")
    return net, disc, opt_gen, opt_disc, iteration, seed
