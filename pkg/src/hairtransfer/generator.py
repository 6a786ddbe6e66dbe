"""Latent state, generator backends and latent-space utilities."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np
from scipy import ndimage

from .errors import ShapeError

NOISE_VAR_FLOOR = 1e-8


@dataclass
class LatentState:
    """Optimization variables: extended latent ``(L, D)`` plus square noise maps."""

    w_plus: np.ndarray
    noise: list[np.ndarray]

    def copy(self) -> "LatentState":
        return LatentState(self.w_plus.copy(), [n.copy() for n in self.noise])

    @property
    def size(self) -> int:
        return self.w_plus.size + sum(n.size for n in self.noise)

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.w_plus.ravel(), *(n.ravel() for n in self.noise)])

    def unflatten(self, vec: np.ndarray) -> "LatentState":
        """Split a flat vector into a state with this state's geometry."""
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.size,):
            raise ShapeError(f"flat vector of length {vec.size}, expected {self.size}")
        k = self.w_plus.size
        w = vec[:k].reshape(self.w_plus.shape)
        maps = []
        for n in self.noise:
            maps.append(vec[k : k + n.size].reshape(n.shape))
            k += n.size
        return LatentState(w, maps)

    def zeros_like(self) -> "LatentState":
        return LatentState(np.zeros_like(self.w_plus), [np.zeros_like(n) for n in self.noise])


@dataclass(frozen=True)
class Geometry:
    num_layers: int
    latent_dim: int
    noise_sides: tuple[int, ...]
    resolution: int


class Generator(Protocol):
    geometry: Geometry
    mean_latent: np.ndarray

    def synthesize(self, state: LatentState) -> np.ndarray: ...

    def vjp(self, state: LatentState, grad_image: np.ndarray) -> LatentState: ...


def check_state(geometry: Geometry, state: LatentState) -> None:
    expected = (geometry.num_layers, geometry.latent_dim)
    if state.w_plus.shape != expected:
        raise ShapeError(f"w_plus shape {state.w_plus.shape}, backend expects {expected}")
    sides = tuple(n.shape for n in state.noise)
    if sides != tuple((s, s) for s in geometry.noise_sides):
        raise ShapeError(f"noise shapes {sides} do not match sides {geometry.noise_sides}")


def normalize_map(noise: np.ndarray) -> np.ndarray:
    centered = noise - noise.mean()
    return centered / np.sqrt(max(centered.var(), NOISE_VAR_FLOOR))


class ToyGenerator:
    """Affine stand-in for a style-based generator.

    ``image = 0.5 + sum_l P_l w[l] + strength * sum_j upsample(noise_j)``

    Each ``P_l`` maps a latent row to a smooth seeded random field in image
    space, coarser for early layers. Noise maps are nearest-neighbour
    upsampled and shared across colour channels. Outputs are not clamped;
    use :func:`to_export` before writing files. Channel 0 carries the hair
    signal and channel 1 the face signal (see :mod:`hairtransfer.toy`).
    """

    hair_channel = 0
    face_channel = 1
    threshold = 0.5

    def __init__(
        self,
        seed: int = 0,
        resolution: int = 32,
        num_layers: int = 5,
        latent_dim: int = 8,
        noise_sides=(4, 8, 16, 32, 32),
        noise_strength: float = 0.05,
        amplitude: float = 0.75,
        channels: int = 3,
    ):
        self.geometry = Geometry(num_layers, latent_dim, tuple(noise_sides), resolution)
        self.noise_strength = noise_strength
        self.channels = channels
        rng = np.random.default_rng(seed)
        # smoothing shrinks from resolution/4 at layer 0 to 1 px at the last layer
        sigmas = np.geomspace(resolution / 4, 1.0, num_layers)
        proj = np.empty((num_layers, latent_dim, channels, resolution, resolution))
        for layer, sigma in enumerate(sigmas):
            for d in range(latent_dim):
                field = rng.standard_normal((channels, resolution, resolution))
                field = ndimage.gaussian_filter(field, (0, sigma, sigma), mode="wrap")
                field /= np.sqrt(np.mean(field**2))
                proj[layer, d] = field
        # unit-normal latent rows give a per-pixel standard deviation of ``amplitude``
        self.projections = proj * (amplitude / np.sqrt(num_layers * latent_dim))
        self.mean_latent = 0.5 * rng.standard_normal(latent_dim)

    def hair_mask(self, image: np.ndarray) -> np.ndarray:
        """Segmentation stand-in: thresholded hair-signal channel."""
        return np.asarray(image)[self.hair_channel] > self.threshold

    def _upsample(self, noise):
        f = self.geometry.resolution // noise.shape[0]
        return np.repeat(np.repeat(noise, f, axis=0), f, axis=1)

    def synthesize(self, state: LatentState) -> np.ndarray:
        check_state(self.geometry, state)
        img = 0.5 + np.einsum("ldchw,ld->chw", self.projections, state.w_plus)
        noise = sum(self._upsample(n) for n in state.noise)
        return img + self.noise_strength * noise[None]

    def vjp(self, state: LatentState, grad_image: np.ndarray) -> LatentState:
        check_state(self.geometry, state)
        r = self.geometry.resolution
        g_w = np.einsum("ldchw,chw->ld", self.projections, grad_image)
        g_pix = self.noise_strength * grad_image.sum(axis=0)
        g_noise = []
        for n in state.noise:
            f = r // n.shape[0]
            g_noise.append(g_pix.reshape(n.shape[0], f, n.shape[1], f).sum(axis=(1, 3)))
        return LatentState(g_w, g_noise)


def init_latent_state(backend, seed: int = 0) -> LatentState:
    """Mean latent on every layer plus seeded, normalized Gaussian noise maps."""
    geo = backend.geometry
    rng = np.random.default_rng(seed)
    w_plus = np.tile(np.asarray(backend.mean_latent, dtype=np.float64), (geo.num_layers, 1))
    noise = [normalize_map(rng.standard_normal((s, s))) for s in geo.noise_sides]
    return LatentState(w_plus, noise)


def latent_distance(state: LatentState, backend) -> float:
    check_state(backend.geometry, state)
    return float(np.linalg.norm(state.w_plus - np.asarray(backend.mean_latent)[None, :]))


def to_export(image: np.ndarray) -> np.ndarray:
    return np.clip(image, 0.0, 1.0)
