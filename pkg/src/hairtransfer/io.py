"""PNG and landmark file I/O."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import LandmarkError, ShapeError

MASK_THRESHOLD = 127
NUM_LANDMARKS = 68


def read_image(path) -> np.ndarray:
    """8-bit RGB PNG -> float64 ``(3, H, W)`` in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return arr.transpose(2, 0, 1)


def write_image(path, image) -> None:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ShapeError(f"expected a (3, H, W) image, got {image.shape}")
    u8 = np.round(np.clip(image, 0, 1) * 255).astype(np.uint8)
    Image.fromarray(u8.transpose(1, 2, 0), mode="RGB").save(path)


def read_mask(path) -> np.ndarray:
    """Single-channel 8-bit PNG, foreground where the value exceeds 127."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return arr > MASK_THRESHOLD


def write_mask(path, mask) -> None:
    Image.fromarray(np.asarray(mask, dtype=bool).astype(np.uint8) * 255, mode="L").save(path)


def read_landmarks(path, image_shape=None) -> np.ndarray:
    """JSON array of 68 ``[x, y]`` pairs -> ``(68, 2)`` float array.

    With ``image_shape`` ``(H, W)``, points must lie within the image bounds
    plus a 10% margin.
    """
    pts = np.asarray(json.loads(Path(path).read_text()), dtype=np.float64)
    return validate_landmarks(pts, image_shape)


def validate_landmarks(pts, image_shape=None) -> np.ndarray:
    pts = np.asarray(pts, dtype=np.float64)
    if pts.shape != (NUM_LANDMARKS, 2):
        raise LandmarkError(f"expected {NUM_LANDMARKS} (x, y) landmarks, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise LandmarkError("landmarks contain non-finite values")
    if image_shape is not None:
        h, w = image_shape
        lo = -0.1 * np.array([w, h])
        hi = 1.1 * np.array([w, h])
        if np.any(pts < lo) or np.any(pts > hi):
            raise LandmarkError("landmarks fall outside the image bounds")
    return pts


def write_landmarks(path, pts) -> None:
    Path(path).write_text(json.dumps(np.asarray(pts, dtype=float).tolist()))
