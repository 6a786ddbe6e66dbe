"""Image-quality and fidelity metrics."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ShapeError, UndefinedIoU
from .masks import as_mask, mask_iou

PSNR_CAP = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, mask=None) -> float:
    """Peak signal-to-noise ratio for unit dynamic range, capped at 100 dB.

    With ``mask`` the mean squared error runs over masked pixels only.
    """
    a, b = _pair(a, b)
    sq = (a - b) ** 2
    if mask is not None:
        mask = as_mask(mask)
        if mask.shape != a.shape[-2:]:
            raise ShapeError(f"mask {mask.shape} vs image {a.shape}")
        sq = sq[..., mask]
    mse = float(sq.mean())
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))


def _gray(x):
    return x.mean(axis=0) if x.ndim == 3 else x


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _valid_filter(x, g):
    # separable correlation keeping only windows fully inside the image
    k = g.size
    rows = ndimage.correlate1d(x, g, axis=0, mode="constant")
    both = ndimage.correlate1d(rows, g, axis=1, mode="constant")
    r = k // 2
    return both[r : x.shape[0] - r, r : x.shape[1] - r]


def ssim_map(a, b) -> np.ndarray:
    """SSIM at every valid 11x11 window position of the channel-mean images."""
    a, b = _pair(a, b)
    a, b = _gray(a), _gray(b)
    if min(a.shape) < SSIM_WINDOW:
        raise ShapeError(f"image {a.shape} smaller than the {SSIM_WINDOW}px SSIM window")
    g = gaussian_window()
    mu_a, mu_b = _valid_filter(a, g), _valid_filter(b, g)
    var_a = _valid_filter(a * a, g) - mu_a**2
    var_b = _valid_filter(b * b, g) - mu_b**2
    cov = _valid_filter(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a**2 + mu_b**2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return num / den


def ssim(a, b, mask=None) -> float:
    """Mean SSIM over valid windows; with ``mask``, over windows centred inside it."""
    smap = ssim_map(a, b)
    if mask is None:
        return float(smap.mean())
    mask = as_mask(mask)
    r = SSIM_WINDOW // 2
    centres = mask[r : mask.shape[0] - r, r : mask.shape[1] - r]
    if not centres.any():
        raise ShapeError("mask has no pixel at a valid SSIM window centre")
    return float(smap[centres].mean())


@dataclass(frozen=True)
class FeatureSetStats:
    mean: np.ndarray
    cov: np.ndarray
    count: int

    @classmethod
    def from_features(cls, feats) -> "FeatureSetStats":
        feats = np.asarray(feats, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] < 2:
            raise ShapeError("need an (N, C) feature array with N >= 2")
        return cls(feats.mean(axis=0), np.cov(feats, rowvar=False), feats.shape[0])


def _psd_sqrt(m):
    m = (m + m.T) / 2
    vals, vecs = np.linalg.eigh(m)
    return (vecs * np.sqrt(np.clip(vals, 0, None))) @ vecs.T


def frechet_distance(s1: FeatureSetStats, s2: FeatureSetStats) -> float:
    """``|mu1 - mu2|^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2))``.

    The trace of the product root is taken from the eigenvalues of the
    symmetric matrix ``S1^(1/2) S2 S1^(1/2)``, which shares its spectrum with
    ``S1 S2``; negative eigenvalues from round-off are clipped to zero.
    """
    mu1, mu2 = np.asarray(s1.mean, float), np.asarray(s2.mean, float)
    c1, c2 = np.atleast_2d(s1.cov).astype(float), np.atleast_2d(s2.cov).astype(float)
    if mu1.shape != mu2.shape or c1.shape != c2.shape or c1.shape != (mu1.size, mu1.size):
        raise ShapeError("feature statistics have different dimensions")
    root1 = _psd_sqrt(c1)
    inner = root1 @ ((c2 + c2.T) / 2) @ root1
    eig = np.clip(np.linalg.eigvalsh((inner + inner.T) / 2), 0, None)
    diff = mu1 - mu2
    value = float(diff @ diff + np.trace(c1) + np.trace(c2) - 2.0 * np.sqrt(eig).sum())
    return max(value, 0.0)


def hair_iou_eval(target_hair, synth_hair) -> float:
    return mask_iou(target_hair, synth_hair)


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def evaluation_report(
    identity,
    synth,
    face_mask,
    target_hair,
    synth_hair,
    latent_distance: float,
    tuple_id: str,
    config: dict,
    fid: float | None = None,
) -> dict:
    """Metrics JSON for one transfer; PSNR and SSIM are restricted to ``face_mask``.

    ``synth_hair`` may be ``None`` when no segmentation of the output exists;
    hair IoU is then reported as ``None``. SSIM is ``None`` when no valid
    window centre falls inside the face mask.
    """
    synth = np.clip(synth, 0.0, 1.0)
    face_mask = as_mask(face_mask)
    try:
        ssim_value = ssim(identity, synth, face_mask)
    except ShapeError:
        ssim_value = None
    hair_iou = None
    if synth_hair is not None:
        try:
            hair_iou = hair_iou_eval(target_hair, synth_hair)
        except UndefinedIoU:
            hair_iou = None
    return {
        "tuple_id": tuple_id,
        "psnr": psnr(identity, synth, face_mask) if face_mask.any() else None,
        "ssim": ssim_value,
        "fid": fid,
        "latent_distance": float(latent_distance),
        "hair_iou": hair_iou,
        "face_mask_area": int(face_mask.sum()),
        "config_hash": config_hash(config),
    }
