"""Loss terms of the hair-transfer objective and their weighted combination.

Each term is a small callable object that caches everything derived from its
fixed reference image, and maps a synthesized image to ``(value, grad)``
where ``grad`` is taken w.r.t. that image. The module-level functions are
convenience wrappers taking both images.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Mapping

import numpy as np

from .errors import EmptyRegion, ShapeError
from .features import (
    gram,
    mean_appearance,
    perceptual_distance_grad,
    resize_mask_nearest,
)
from .generator import NOISE_VAR_FLOOR
from .masks import as_mask

TERMS = ("face", "structure", "appearance", "style", "noise")
FACE_LEVELS = (1, 2, 3, 4, 5)
STRUCTURE_LEVELS = (4, 5)


@dataclass(frozen=True)
class LossWeights:
    face: float = 1.0
    structure: float = 1.0
    appearance: float = 40.0
    style: float = 1.5e4
    noise: float = 1e5

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"loss weight {f.name}={v} must be finite and >= 0")

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in TERMS}


STAGE1_TERMS = frozenset({"face", "structure", "noise"})
ALL_TERMS = frozenset(TERMS)


def _image_mask(image, mask):
    image = np.asarray(image, dtype=np.float64)
    mask = as_mask(mask)
    if image.shape[-2:] != mask.shape:
        raise ShapeError(f"image {image.shape} vs mask {mask.shape}")
    return image, mask


class PerceptualTerm:
    """Mean perceptual distance over ``levels`` between pixel-masked images."""

    def __init__(self, extractor, reference, mask, levels):
        reference, mask = _image_mask(reference, mask)
        if not mask.any():
            raise EmptyRegion("perceptual loss mask is empty")
        self.extractor = extractor
        self.mask = mask
        self.levels = tuple(levels)
        self.weights = getattr(extractor, "lpips_weights", None) or {}
        self.targets = {b: extractor.extract(reference * mask, b) for b in self.levels}

    def __call__(self, synth, grad: bool = True):
        synth = np.asarray(synth, dtype=np.float64)
        if synth.shape[-2:] != self.mask.shape:
            raise ShapeError(f"synth {synth.shape} vs mask {self.mask.shape}")
        masked = synth * self.mask
        total = 0.0
        g_img = np.zeros_like(synth) if grad else None
        for b in self.levels:
            feats = self.extractor.extract(masked, b)
            value, g_feat = perceptual_distance_grad(self.targets[b], feats, self.weights.get(b))
            total += value
            if grad:
                g_img += self.extractor.vjp(masked, b, g_feat)
        n = len(self.levels)
        if not grad:
            return total / n
        return total / n, g_img * self.mask / n


class AppearanceTerm:
    """Squared distance between masked mean appearance vectors."""

    def __init__(self, extractor, reference, ref_mask, synth_mask):
        reference, ref_mask = _image_mask(reference, ref_mask)
        self.extractor = extractor
        self.target = mean_appearance(extractor, reference, ref_mask)
        self.synth_mask = as_mask(synth_mask)
        self._small = None

    def __call__(self, synth, grad: bool = True):
        synth, mask = _image_mask(synth, self.synth_mask)
        tap = self.extractor.appearance_tap
        feats = self.extractor.extract(synth, tap)
        small = resize_mask_nearest(mask, feats.shape[1:])
        count = np.count_nonzero(small)
        if count == 0:
            raise EmptyRegion("synthesized hair mask is empty at appearance resolution")
        mean = feats[:, small].sum(axis=1) / count
        diff = mean - self.target
        value = float(diff @ diff)
        if not grad:
            return value
        g_feat = (2.0 * diff / count)[:, None, None] * small[None]
        return value, self.extractor.vjp(synth, tap, g_feat)


class StyleTerm:
    """Mean squared Frobenius distance between Gram matrices over the style taps."""

    def __init__(self, extractor, reference, ref_mask, synth_mask):
        reference, ref_mask = _image_mask(reference, ref_mask)
        synth_mask = as_mask(synth_mask)
        if not ref_mask.any() or not synth_mask.any():
            raise EmptyRegion("style loss mask is empty")
        self.extractor = extractor
        self.taps = tuple(extractor.style_taps)
        self.synth_mask = synth_mask
        self.targets = {t: gram(extractor.extract(reference * ref_mask, t)) for t in self.taps}

    def __call__(self, synth, grad: bool = True):
        synth, mask = _image_mask(synth, self.synth_mask)
        masked = synth * mask
        total = 0.0
        g_img = np.zeros_like(synth) if grad else None
        for t in self.taps:
            feats = self.extractor.extract(masked, t)
            flat = feats.reshape(feats.shape[0], -1)
            diff = flat @ flat.T - self.targets[t]
            total += float(np.sum(diff * diff))
            if grad:
                g_feat = (4.0 * diff @ flat).reshape(feats.shape)
                g_img += self.extractor.vjp(masked, t, g_feat)
        n = len(self.taps)
        if not grad:
            return total / n
        return total / n, g_img * mask / n


def face_loss(extractor, identity, synth, target_mask) -> float:
    return PerceptualTerm(extractor, identity, target_mask, FACE_LEVELS)(synth, grad=False)


def structure_loss(extractor, shape_ref, synth, eroded_hair) -> float:
    return PerceptualTerm(extractor, shape_ref, eroded_hair, STRUCTURE_LEVELS)(synth, grad=False)


def appearance_loss(extractor, app_ref, app_mask, synth, synth_hair_mask) -> float:
    return AppearanceTerm(extractor, app_ref, app_mask, synth_hair_mask)(synth, grad=False)


def style_loss(extractor, app_ref, app_mask, synth, synth_hair_mask) -> float:
    return StyleTerm(extractor, app_ref, app_mask, synth_hair_mask)(synth, grad=False)


def _is_pow2(n):
    return n > 0 and n & (n - 1) == 0


def _pool2(x):
    r = x.shape[0] // 2
    return x.reshape(r, 2, r, 2).mean(axis=(1, 3))


def pyramid_down(noise_map) -> list[np.ndarray]:
    """2x2 mean-pooled copies of a square map, halving until 8x8."""
    noise_map = np.asarray(noise_map, dtype=np.float64)
    if noise_map.ndim != 2 or noise_map.shape[0] != noise_map.shape[1]:
        raise ShapeError(f"noise map must be square, got {noise_map.shape}")
    if not _is_pow2(noise_map.shape[0]):
        raise ShapeError(f"noise map side {noise_map.shape[0]} is not a power of two")
    levels = []
    current = noise_map
    while current.shape[0] > 8:
        current = _pool2(current)
        levels.append(current)
    return levels


def _autocorr(p, axis):
    """(1/r^2) * sum n(x, y) n(x-1, y) along ``axis`` with wrap-around."""
    return float(np.mean(p * np.roll(p, 1, axis=axis)))


def noise_regularization(noise_maps, grad: bool = False):
    """Squared one-pixel autocorrelation of normalized noise maps over their pyramids.

    With ``grad`` returns ``(value, [d value / d map])``; the gradient passes
    through the zero-mean / unit-variance normalization.
    """
    total = 0.0
    grads = []
    for raw in noise_maps:
        raw = np.asarray(raw, dtype=np.float64)
        centered = raw - raw.mean()
        var = centered.var()
        sigma = np.sqrt(max(var, NOISE_VAR_FLOOR))
        z = centered / sigma
        pyramid = [z, *pyramid_down(z)]
        g_levels = []
        for p in pyramid:
            g_p = np.zeros_like(p)
            for axis in (0, 1):
                h = _autocorr(p, axis)
                total += h * h
                if grad:
                    g_p += 2.0 * h * (np.roll(p, 1, axis) + np.roll(p, -1, axis)) / p.size
            g_levels.append(g_p)
        if not grad:
            continue
        # back through the pyramid: each 2x2 mean distributes a quarter per pixel
        g = g_levels[-1]
        for g_up in reversed(g_levels[:-1]):
            g = g_up + np.repeat(np.repeat(g, 2, axis=0), 2, axis=1) / 4.0
        g = g - g.mean()
        if var > NOISE_VAR_FLOOR:
            g = g - z * np.mean(g * z)
        grads.append(g / sigma)
    if grad:
        return total, grads
    return total


@dataclass
class LossBundle:
    """Component values, weighted total and (optionally) per-term gradients.

    Disabled terms have value ``None`` and no gradient.
    """

    values: dict[str, float | None]
    total: float
    weights: LossWeights
    grads: dict[str, np.ndarray] = field(default_factory=dict)
    total_grad: np.ndarray | None = None


def total_loss(
    values: Mapping[str, float | None],
    weights: LossWeights,
    enabled=ALL_TERMS,
    grads: Mapping[str, np.ndarray] | None = None,
) -> LossBundle:
    """Weighted sum of the enabled terms (and of their gradients, if given)."""
    enabled = frozenset(enabled)
    w = weights.as_dict()
    kept = {name: (float(values[name]) if name in enabled else None) for name in TERMS}
    total = 0.0
    for name in TERMS:
        if name in enabled:
            total += w[name] * kept[name]
    bundle = LossBundle(kept, total, weights)
    if grads is not None:
        bundle.grads = {name: grads[name] for name in TERMS if name in enabled}
        acc = None
        for name, g in bundle.grads.items():
            acc = w[name] * g if acc is None else acc + w[name] * g
        bundle.total_grad = acc
    return bundle
