"""Data ingestion and synthesis: IDX image files, the 65-column 8x8 digits
CSV, binary spike-train CSVs, and a correlated synthetic spike generator.

Loaders are strict: malformed input raises before any partial data is
returned, with a distinct error type per failure mode.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

from .numcore import RngStream, as_bits

IDX_MAGIC_LABELS = 0x00000801
IDX_MAGIC_IMAGES = 0x00000803


class DataFormatError(ValueError):
    """Base class for all loader failures."""


class IdxMagicError(DataFormatError):
    pass


class IdxTruncatedError(DataFormatError):
    pass


class IdxSizeError(DataFormatError):
    pass


class CsvFormatError(DataFormatError):
    pass


@dataclass
class BinaryDataset:
    """Equal-length binary samples, optionally labelled, optionally carrying
    an image shape for display."""

    samples: np.ndarray  # (n, d) float64 of 0/1
    labels: np.ndarray | None = None
    sample_shape: tuple | None = None

    def __post_init__(self):
        self.samples = as_bits(np.atleast_2d(self.samples))
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.samples.shape[0],):
                raise ValueError("need exactly one label per sample")
        if self.sample_shape is not None:
            h, w = self.sample_shape
            if h * w != self.samples.shape[1]:
                raise ValueError("sample_shape does not match the sample length")

    def __len__(self):
        return self.samples.shape[0]


@dataclass
class SpikeTrains:
    """frames x neurons binary activity matrix."""

    spikes: np.ndarray
    trials: list | None = None

    def __post_init__(self):
        self.spikes = as_bits(np.atleast_2d(self.spikes))
        if self.spikes.shape[0] < 1:
            raise ValueError("need at least one frame")

    @property
    def frames(self):
        return self.spikes.shape[0]

    @property
    def neurons(self):
        return self.spikes.shape[1]

    def as_dataset(self) -> BinaryDataset:
        return BinaryDataset(self.spikes)


def load_idx(path) -> np.ndarray:
    """Parse an IDX file (big-endian header). Returns a uint8 array shaped
    (n,) for label files and (n, rows, cols) for image files."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise IdxTruncatedError(f"{path}: file too short for a magic number")
    magic = struct.unpack(">I", raw[:4])[0]
    if magic == IDX_MAGIC_LABELS:
        n_dims = 1
    elif magic == IDX_MAGIC_IMAGES:
        n_dims = 3
    else:
        raise IdxMagicError(f"{path}: unrecognized magic 0x{magic:08x}")
    header_len = 4 + 4 * n_dims
    if len(raw) < header_len:
        raise IdxTruncatedError(f"{path}: truncated dimension header")
    dims = struct.unpack(f">{n_dims}I", raw[4:header_len])
    expected = int(np.prod(dims))
    payload = raw[header_len:]
    if len(payload) < expected:
        raise IdxTruncatedError(
            f"{path}: payload has {len(payload)} bytes, header declares {expected}"
        )
    if len(payload) > expected:
        raise IdxSizeError(
            f"{path}: {len(payload) - expected} trailing bytes beyond the declared size"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def binarize(values, threshold) -> np.ndarray:
    """1.0 where value > threshold (strictly), else 0.0."""
    return (np.asarray(values, dtype=np.float64) > threshold).astype(np.float64)


def dataset_from_images(images, labels=None, threshold=127) -> BinaryDataset:
    """Flatten a (n, h, w) stack into a thresholded BinaryDataset."""
    images = np.asarray(images)
    if images.ndim != 3:
        raise ValueError("expected an (n, h, w) image stack")
    n, h, w = images.shape
    return BinaryDataset(
        binarize(images, threshold).reshape(n, h * w),
        labels=labels,
        sample_shape=(h, w),
    )


def load_digits_csv(path, threshold=8) -> BinaryDataset:
    """Load the 65-column digits CSV: 64 pixel values in 0..16 plus a label
    column in 0..9 per row. Pixels are binarized at ``threshold``."""
    pixels, labels = [], []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            if len(row) != 65:
                raise CsvFormatError(f"{path}: row {i} has {len(row)} columns, expected 65")
            try:
                vals = [int(cell) for cell in row]
            except ValueError:
                raise CsvFormatError(f"{path}: row {i} contains a non-integer cell") from None
            if not 0 <= vals[-1] <= 9:
                raise CsvFormatError(f"{path}: row {i} label {vals[-1]} outside 0..9")
            pixels.append(vals[:-1])
            labels.append(vals[-1])
    if not pixels:
        raise CsvFormatError(f"{path}: no data rows")
    return BinaryDataset(
        binarize(np.array(pixels), threshold),
        labels=np.array(labels),
        sample_shape=(8, 8),
    )


def one_hot(label: int, classes: int) -> np.ndarray:
    """Indicator vector with bit ``label`` set."""
    label = int(label)
    classes = int(classes)
    if not 0 <= label < classes:
        raise ValueError(f"label {label} outside 0..{classes - 1}")
    v = np.zeros(classes)
    v[label] = 1.0
    return v


def synth_spikes(
    neurons: int,
    frames: int,
    base_rate: float,
    shared_drive_prob: float,
    seed: int,
    drive_rate: float = 0.2,
) -> SpikeTrains:
    """Correlated sparse spike trains.

    Each frame independently enters a shared-drive event with probability
    ``shared_drive_prob``; every neuron then fires at ``drive_rate`` instead
    of ``base_rate``. The overall rate is
    (1 - shared_drive_prob) * base_rate + shared_drive_prob * drive_rate.
    """
    for name, v in (("base_rate", base_rate), ("shared_drive_prob", shared_drive_prob),
                    ("drive_rate", drive_rate)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1]")
    root = RngStream(seed)
    shared = root.derive(0).uniforms(frames) < shared_drive_prob
    rates = np.where(shared, drive_rate, base_rate)[:, None]
    u = root.derive(1).uniforms(frames * neurons).reshape(frames, neurons)
    return SpikeTrains((u < rates).astype(np.float64))


def load_spikes_csv(path) -> SpikeTrains:
    """Load a frames x neurons CSV of strict 0/1 cells."""
    rows = []
    width = None
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise CsvFormatError(
                    f"{path}: row {i} has {len(row)} columns, previous rows have {width}"
                )
            parsed = []
            for j, cell in enumerate(row):
                cell = cell.strip()
                if cell not in ("0", "1"):
                    raise CsvFormatError(f"{path}: row {i} column {j}: {cell!r} is not 0 or 1")
                parsed.append(float(cell))
            rows.append(parsed)
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    return SpikeTrains(np.array(rows))
