"""8-bit image files for reports. Metrics never read these back."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def to_uint8(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=-1)
    return np.round(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)


def write_ppm(path, img):
    arr = to_uint8(img)
    h, w, _ = arr.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + arr.tobytes())


def read_ppm(path):
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P6":
        raise ValueError(f"{path}: not a binary PPM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PPM supported")
    data = parts[4][: w * h * 3]
    return np.frombuffer(data, np.uint8).reshape(h, w, 3).astype(np.float64) / 255.0


def write_png(path, img):
    Image.fromarray(to_uint8(img)).save(path, format="PNG", optimize=False)


def grid(rows, pad=1):
    """Tile a list of rows of (H,W,3) float images into one image."""
    h, w = np.asarray(rows[0][0]).shape[:2]
    ncol = max(len(r) for r in rows)
    out = np.ones((len(rows) * (h + pad) + pad, ncol * (w + pad) + pad, 3))
    for i, row in enumerate(rows):
        for j, img in enumerate(row):
            img = np.asarray(img, dtype=np.float64)
            if img.ndim == 2:
                img = np.repeat(img[..., None], 3, axis=-1)
            y, x = pad + i * (h + pad), pad + j * (w + pad)
            out[y : y + h, x : x + w] = np.clip(img, 0, 1)
    return out
