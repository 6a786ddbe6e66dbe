"""Multi-level feature extraction, perceptual distance, mean appearance and Gram matrices.

An extractor maps a channel-first image ``(3, H, W)`` to feature maps
``(C, h, w)`` at numbered levels 1-5 and at named taps. Every extractor also
provides ``vjp``: the gradient of a scalar functional of one layer's output
pulled back to the input image. The losses are written against that pair of
methods only, so a pretrained network can stand in for the linear toy one.
"""
from __future__ import annotations

from typing import Protocol

import numpy as np

from .errors import EmptyRegion, LevelError, ShapeError
from .masks import as_mask

APPEARANCE_TAP = "relu1_1"
STYLE_TAPS = ("relu1_2", "relu2_2", "relu3_3", "relu4_3")
LEVEL_TAPS = {1: "relu1_2", 2: "relu2_2", 3: "relu3_3", 4: "relu4_3", 5: "relu5_3"}

LPIPS_EPS = 1e-10


class FeatureExtractor(Protocol):
    #: level -> (channels, stride)
    levels: dict[int, tuple[int, int]]
    appearance_tap: str
    style_taps: tuple[str, ...]

    def extract(self, image: np.ndarray, layer: int | str) -> np.ndarray: ...

    def vjp(self, image: np.ndarray, layer: int | str, grad: np.ndarray) -> np.ndarray: ...


def _windows(n: int, stride: int):
    starts = np.arange(0, n, stride)
    return starts, np.diff(np.append(starts, n))


def avg_pool(x: np.ndarray, stride: int) -> np.ndarray:
    """Non-overlapping ``stride`` x ``stride`` means; a partial last window
    (ceil mode) averages the pixels it contains."""
    if stride == 1:
        return x
    _, h, w = x.shape
    rs, rc = _windows(h, stride)
    cs, cc = _windows(w, stride)
    sums = np.add.reduceat(np.add.reduceat(x, rs, axis=1), cs, axis=2)
    return sums / (rc[:, None] * cc[None, :])


def avg_pool_adjoint(g: np.ndarray, stride: int, shape=None) -> np.ndarray:
    """Adjoint of :func:`avg_pool` for an input of spatial ``shape``
    (default: the divisible case)."""
    if stride == 1:
        return g
    h, w = shape if shape is not None else (g.shape[1] * stride, g.shape[2] * stride)
    _, rc = _windows(h, stride)
    _, cc = _windows(w, stride)
    g = g / (rc[:, None] * cc[None, :])
    return np.repeat(np.repeat(g, rc, axis=1), cc, axis=2)


class LinearExtractor:
    """Average pooling followed by a fixed channel-mixing matrix, per layer.

    ``layers`` maps a level number or tap name to ``(stride, weight)`` with
    ``weight`` of shape ``(C_out, C_in)``. Zero bias, so the map is linear.
    """

    def __init__(self, layers, appearance_tap=APPEARANCE_TAP, style_taps=STYLE_TAPS):
        self.layers = {k: (int(s), np.asarray(w, dtype=np.float64)) for k, (s, w) in layers.items()}
        self.appearance_tap = appearance_tap
        self.style_taps = tuple(style_taps)
        self.levels = {
            k: (w.shape[0], s) for k, (s, w) in self.layers.items() if isinstance(k, int)
        }
        missing = [t for t in (appearance_tap, *self.style_taps) if t not in self.layers]
        if missing:
            raise LevelError(f"extractor lacks taps {missing}")

    def _layer(self, layer):
        try:
            return self.layers[layer]
        except KeyError:
            raise LevelError(f"unknown level {layer!r}") from None

    def extract(self, image, layer):
        stride, weight = self._layer(layer)
        pooled = avg_pool(np.asarray(image, dtype=np.float64), stride)
        return np.einsum("oc,chw->ohw", weight, pooled)

    def vjp(self, image, layer, grad):
        stride, weight = self._layer(layer)
        shape = np.shape(image)[-2:]
        return avg_pool_adjoint(np.einsum("oc,ohw->chw", weight, grad), stride, shape)


class ToyExtractor(LinearExtractor):
    """Seeded linear extractor with VGG-like level geometry.

    Level ``b`` has ``2**(b+2)`` channels at stride ``2**(b-1)``. Levels 1-4
    double as the style taps; the appearance tap is a separate stride-1 layer,
    or the identity on RGB when ``identity_appearance`` is set.

    ``scale`` and ``appearance_scale`` multiply the random weights. The
    defaults keep the weighted appearance and style terms within a couple of
    orders of magnitude of the reconstruction terms on toy tuples; with unit
    weights the fourth-power Gram term dominates everything else.
    """

    def __init__(
        self,
        seed: int = 0,
        identity_appearance: bool = False,
        in_channels: int = 3,
        scale: float = 3e-4,
        appearance_scale: float = 0.01,
    ):
        rng = np.random.default_rng(seed)
        layers = {}
        for b in range(1, 6):
            weight = scale * rng.standard_normal((2 ** (b + 2), in_channels))
            layers[b] = (2 ** (b - 1), weight)
            layers[LEVEL_TAPS[b]] = layers[b]
        if identity_appearance:
            layers[APPEARANCE_TAP] = (1, np.eye(in_channels))
        else:
            weight = appearance_scale * rng.standard_normal((8, in_channels))
            layers[APPEARANCE_TAP] = (1, weight)
        super().__init__(layers)


def _check_geometry(fa, fb):
    if fa.shape != fb.shape:
        raise ShapeError(f"feature geometry mismatch: {fa.shape} vs {fb.shape}")


def normalize_channels(f: np.ndarray) -> np.ndarray:
    norm = np.sqrt(np.sum(f * f, axis=0, keepdims=True))
    return f / (norm + LPIPS_EPS)


def _normalize_channels_adjoint(f, g):
    norm = np.sqrt(np.sum(f * f, axis=0, keepdims=True))
    denom = norm + LPIPS_EPS
    radial = np.sum(f * g, axis=0, keepdims=True)
    safe = np.where(norm > 0, norm, 1.0)
    return g / denom - f * radial / (safe * denom * denom)


def perceptual_distance(fa, fb, weights=None) -> float:
    """Mean squared difference of channel-normalized features.

    ``weights`` optionally scales each channel (calibrated linear heads);
    ``None`` means unit weights.
    """
    fa, fb = np.asarray(fa, dtype=np.float64), np.asarray(fb, dtype=np.float64)
    _check_geometry(fa, fb)
    diff = normalize_channels(fa) - normalize_channels(fb)
    sq = diff * diff
    if weights is not None:
        sq = sq * np.asarray(weights, dtype=np.float64)[:, None, None]
    return float(sq.mean())


def perceptual_distance_grad(target, synth, weights=None):
    """Value and gradient w.r.t. ``synth`` of ``perceptual_distance(target, synth)``."""
    _check_geometry(target, synth)
    diff = normalize_channels(synth) - normalize_channels(target)
    w = 1.0 if weights is None else np.asarray(weights, dtype=np.float64)[:, None, None]
    value = float((w * diff * diff).mean())
    g_unit = 2.0 * w * diff / diff.size
    return value, _normalize_channels_adjoint(synth, g_unit)


def resize_mask_nearest(mask, shape) -> np.ndarray:
    mask = as_mask(mask)
    h, w = shape
    rows = (np.arange(h) * mask.shape[0]) // h
    cols = (np.arange(w) * mask.shape[1]) // w
    return mask[np.ix_(rows, cols)]


def masked_mean(features, mask) -> np.ndarray:
    """Per-channel spatial mean of ``features`` over ``mask`` (same spatial size)."""
    features = np.asarray(features, dtype=np.float64)
    mask = as_mask(mask)
    if features.shape[1:] != mask.shape:
        raise ShapeError(f"features {features.shape} vs mask {mask.shape}")
    count = np.count_nonzero(mask)
    if count == 0:
        raise EmptyRegion("mask selects no feature positions")
    return features[:, mask].sum(axis=1) / count


def mean_appearance(extractor, image, mask) -> np.ndarray:
    feats = extractor.extract(image, extractor.appearance_tap)
    return masked_mean(feats, resize_mask_nearest(mask, feats.shape[1:]))


def gram(features) -> np.ndarray:
    """``gamma.T @ gamma`` with ``gamma`` the ``(HW, C)`` reshape of the features."""
    features = np.asarray(features, dtype=np.float64)
    flat = features.reshape(features.shape[0], -1)
    return flat @ flat.T
