"""Binary PGM (P5) image output: dependency-free, byte-exact, diffable."""

from __future__ import annotations

import numpy as np


def to_gray(values) -> np.ndarray:
    """Map [0, 1] floats to uint8 0..255 (rounded, clipped)."""
    arr = np.asarray(values, dtype=np.float64)
    return np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)


def write_pgm(path, image):
    image = np.asarray(image, dtype=np.uint8)
    if image.ndim != 2:
        raise ValueError("PGM images are 2-D")
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def tile_grid(images, cols, pad=1, pad_value=128) -> np.ndarray:
    """Tile (n, h, w) float images in [0, 1] into one uint8 grid with
    ``pad``-pixel separators."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 3 or images.shape[0] == 0:
        raise ValueError("expected a non-empty (n, h, w) stack")
    n, h, w = images.shape
    cols = max(1, int(cols))
    rows = (n + cols - 1) // cols
    grid = np.full(
        (rows * h + (rows + 1) * pad, cols * w + (cols + 1) * pad),
        pad_value,
        dtype=np.uint8,
    )
    for i in range(n):
        r, c = divmod(i, cols)
        y = pad + r * (h + pad)
        x = pad + c * (w + pad)
        grid[y : y + h, x : x + w] = to_gray(images[i])
    return grid
