"""Lossless image I/O helpers.

Images are float64/float32 arrays in [0, 1], shape (H, W, C) with C = 3, or
(H, W) for single-channel masks. On disk everything is 8-bit PNG.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image

from .segmask import Mask


def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.clip(np.round(np.asarray(image, dtype=np.float64) * 255.0),
                   0, 255).astype(np.uint8)


def from_uint8(arr: np.ndarray) -> np.ndarray:
    return np.asarray(arr, dtype=np.float64) / 255.0


def encode_png(image: np.ndarray) -> bytes:
    arr = to_uint8(image) if image.dtype.kind == "f" else np.asarray(image)
    mode = "L" if arr.ndim == 2 else "RGB"
    buf = io.BytesIO()
    Image.fromarray(arr, mode=mode).save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    img = Image.open(io.BytesIO(data))
    if img.mode not in ("L", "RGB"):
        img = img.convert("RGB")
    return from_uint8(np.asarray(img))


def save_image(path: str | Path, image: np.ndarray) -> None:
    Path(path).write_bytes(encode_png(image))


def load_image(path: str | Path) -> np.ndarray:
    return decode_png(Path(path).read_bytes())


def save_mask(path: str | Path, mask: Mask) -> None:
    buf = io.BytesIO()
    Image.fromarray(mask.to_image_array(), mode="L").save(buf, format="PNG")
    Path(path).write_bytes(buf.getvalue())


def load_mask(path: str | Path) -> Mask:
    arr = np.asarray(Image.open(str(path)).convert("L"))
    return Mask.from_image_array(arr)
