"""Binary mask algebra, area-calibrated morphology and compositing.

Masks are plain 2-D boolean arrays. Images are float arrays in [0, 1],
either (H, W) or channel-first (C, H, W).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import EmptyMask, InpaintUnderdetermined, MaskOrderError, ShapeError, UndefinedIoU

_SQUARE = np.ones((3, 3), dtype=bool)  # 8-connectivity

# Eroded masks smaller than this are treated as degenerate.
MIN_ERODED_AREA = 10


@dataclass(frozen=True)
class MorphStats:
    iterations: int
    target_area: float
    achieved_area: int
    degenerate: bool = False

    @property
    def achieved_ratio(self) -> float:
        return self.achieved_area / self.target_area if self.target_area else float("nan")


def as_mask(mask) -> np.ndarray:
    """Validate a 0/1 (or boolean) 2-D array and return it as ``bool``."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ShapeError(f"mask must be 2-D, got shape {arr.shape}")
    if arr.dtype == np.bool_:
        return arr
    if not np.isin(arr, (0, 1)).all():
        raise ValueError("mask values must be exactly 0 or 1")
    return arr.astype(bool)


def _same_shape(*masks):
    shapes = {m.shape for m in masks}
    if len(shapes) != 1:
        raise ShapeError(f"resolution mismatch: {sorted(shapes)}")


def _closest_iteration(mask, target, op, stop_if_empty=False):
    current = mask
    area = int(mask.sum())
    iterations = 0
    for _ in range(max(mask.shape)):
        nxt = op(current, structure=_SQUARE, border_value=0)
        nxt_area = int(nxt.sum())
        if nxt_area == area:
            break
        if stop_if_empty and nxt_area == 0:
            break
        if abs(nxt_area - target) >= abs(area - target):
            break
        current, area = nxt, nxt_area
        iterations += 1
    return current, iterations, area


def dilate(mask, area_growth: float = 0.2, *, return_stats: bool = False):
    """Grow ``mask`` by repeated 3x3 dilation until its area is closest to
    ``(1 + area_growth) * area``.

    Ties resolve to the smaller iteration count, so when no dilation step
    moves the area closer to the target the input comes back unchanged.
    """
    mask = as_mask(mask)
    if not 0 < area_growth <= 1:
        raise ValueError("area_growth must be in (0, 1]")
    area = int(mask.sum())
    if area == 0:
        raise EmptyMask("cannot dilate an empty mask")
    target = (1.0 + area_growth) * area
    out, iterations, achieved = _closest_iteration(mask, target, ndimage.binary_dilation)
    if return_stats:
        return out, MorphStats(iterations, target, achieved)
    return out


def erode(mask, area_shrink: float = 0.2, *, return_stats: bool = False):
    """Shrink ``mask`` by repeated 3x3 erosion toward ``(1 - area_shrink) * area``.

    Never empties a mask. Inputs of 9 pixels or fewer are returned as-is and
    flagged degenerate; results under ``MIN_ERODED_AREA`` pixels are flagged too.
    """
    mask = as_mask(mask)
    if not 0 < area_shrink < 1:
        raise ValueError("area_shrink must be in (0, 1)")
    area = int(mask.sum())
    if area == 0:
        raise EmptyMask("cannot erode an empty mask")
    target = (1.0 - area_shrink) * area
    if area <= 9:
        out, iterations, achieved = mask.copy(), 0, area
    else:
        out, iterations, achieved = _closest_iteration(
            mask, target, ndimage.binary_erosion, stop_if_empty=True
        )
    degenerate = achieved < MIN_ERODED_AREA
    if return_stats:
        return out, MorphStats(iterations, target, achieved, degenerate)
    return out


def ignore_region(dilated, eroded) -> np.ndarray:
    """Ring between a dilated and an eroded mask, left unsupervised."""
    dilated, eroded = as_mask(dilated), as_mask(eroded)
    _same_shape(dilated, eroded)
    if np.any(eroded & ~dilated):
        raise MaskOrderError("eroded mask is not contained in dilated mask")
    return dilated & ~eroded


def face_target_mask(face, dilated_hair) -> np.ndarray:
    """Face pixels that the (dilated) reference hair does not cover."""
    face, dilated_hair = as_mask(face), as_mask(dilated_hair)
    _same_shape(face, dilated_hair)
    return face & ~dilated_hair


def mask_iou(a, b) -> float:
    a, b = as_mask(a), as_mask(b)
    _same_shape(a, b)
    union = np.count_nonzero(a | b)
    if union == 0:
        raise UndefinedIoU("IoU of two empty masks is undefined")
    return np.count_nonzero(a & b) / union


def feather_sigma_for(resolution: int, sigma_at_512: float = 5.0) -> float:
    return sigma_at_512 * resolution / 512.0


def blend_alpha(mask, feather_sigma: float) -> np.ndarray:
    mask = as_mask(mask)
    if feather_sigma < 0:
        raise ValueError("feather_sigma must be >= 0")
    alpha = mask.astype(np.float64)
    if feather_sigma > 0:
        alpha = ndimage.gaussian_filter(alpha, feather_sigma, mode="nearest")
        # kernel normalization leaves ~1e-16 residue on flat regions
        alpha[alpha > 1.0 - 1e-12] = 1.0
        alpha[alpha < 1e-12] = 0.0
    return np.clip(alpha, 0.0, 1.0)


def soft_blend(foreground, background, mask, feather_sigma: float = 0.0) -> np.ndarray:
    """Composite ``foreground`` over ``background`` with a Gaussian-feathered mask."""
    foreground = np.asarray(foreground, dtype=np.float64)
    background = np.asarray(background, dtype=np.float64)
    mask = as_mask(mask)
    if foreground.shape != background.shape or foreground.shape[-2:] != mask.shape:
        raise ShapeError(
            f"resolution mismatch: {foreground.shape}, {background.shape}, {mask.shape}"
        )
    alpha = blend_alpha(mask, feather_sigma)
    out = alpha * foreground + (1.0 - alpha) * background
    # exact copies where alpha saturates
    out = np.where(alpha == 1.0, foreground, out)
    return np.where(alpha == 0.0, background, out)


def _neighbor_mean(values):
    """Mean of in-bounds 4-neighbours for every pixel of a (C, H, W) stack."""
    total = np.zeros_like(values)
    count = np.zeros(values.shape[-2:])
    total[:, 1:, :] += values[:, :-1, :]
    count[1:, :] += 1
    total[:, :-1, :] += values[:, 1:, :]
    count[:-1, :] += 1
    total[:, :, 1:] += values[:, :, :-1]
    count[:, 1:] += 1
    total[:, :, :-1] += values[:, :, 1:]
    count[:, :-1] += 1
    return total / count


def fallback_inpaint(image, hole, tol: float = 1e-4, max_iter: int = 100_000) -> np.ndarray:
    """Fill ``hole`` by neighbour diffusion (Jacobi iteration on the Laplace equation).

    Stand-in for a learned inpainter. Pixels outside the hole are returned
    bit-identical.
    """
    image = np.asarray(image, dtype=np.float64)
    hole = as_mask(hole)
    if image.shape[-2:] != hole.shape:
        raise ShapeError(f"image {image.shape} and hole {hole.shape} differ")
    if not hole.any():
        raise EmptyMask("hole is empty")
    if hole.all():
        raise InpaintUnderdetermined("hole covers the entire image")
    stack = image[None] if image.ndim == 2 else image
    filled = _coarse_init(stack, hole)
    for _ in range(max_iter):
        update = _neighbor_mean(filled)[:, hole]
        delta = np.max(np.abs(update - filled[:, hole]))
        filled[:, hole] = update
        if delta < tol:
            break
    out = np.where(hole, filled, stack)
    return out[0] if image.ndim == 2 else out


def _coarse_init(stack, hole):
    """Initial hole values from a half-resolution fill; speeds up diffusion on large holes."""
    filled = stack.copy()
    h, w = hole.shape
    if min(h, w) >= 16 and h % 2 == 0 and w % 2 == 0:
        known = (~hole).astype(np.float64)
        k2 = known.reshape(h // 2, 2, w // 2, 2).sum(axis=(1, 3))
        s2 = (stack * known).reshape(stack.shape[0], h // 2, 2, w // 2, 2).sum(axis=(2, 4))
        coarse_hole = k2 == 0
        if not coarse_hole.all():
            coarse = np.where(coarse_hole, 0.0, s2 / np.maximum(k2, 1))
            if coarse_hole.any():
                coarse = fallback_inpaint(coarse, coarse_hole)
            filled[:, hole] = np.repeat(np.repeat(coarse, 2, axis=1), 2, axis=2)[:, hole]
            return filled
    filled[:, hole] = stack[:, ~hole].mean(axis=1)[:, None]
    return filled
