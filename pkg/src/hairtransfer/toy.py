"""Desk-scale transfer tuples synthesized by the toy generator.

Every portrait is raw ``ToyGenerator`` output for a random latent (values may
leave [0, 1]; they are clamped only on export), so exact reconstructions
exist. Masks follow the toy channel semantics: hair where channel 0 exceeds
0.5, face where channel 1 does and there is no hair.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .generator import LatentState, ToyGenerator, normalize_map
from .masks import as_mask


def toy_hair_mask(image: np.ndarray, generator=ToyGenerator) -> np.ndarray:
    return np.asarray(image)[generator.hair_channel] > generator.threshold


def toy_face_mask(image: np.ndarray, generator=ToyGenerator) -> np.ndarray:
    image = np.asarray(image)
    face = image[generator.face_channel] > generator.threshold
    return face & ~toy_hair_mask(image, generator)


def synth_hair_mask(image, generator=ToyGenerator) -> np.ndarray:
    """Hair mask of a synthesized toy image (thresholded hair-signal channel)."""
    return as_mask(toy_hair_mask(image, generator))


@dataclass
class ToyPortrait:
    image: np.ndarray
    face_mask: np.ndarray
    hair_mask: np.ndarray
    state: LatentState


def sample_portrait(
    generator: ToyGenerator,
    rng: np.random.Generator,
    center=None,
    spread: float = 1.0,
    min_hair: float = 0.18,
    max_hair: float = 0.6,
    min_face: float = 0.1,
    max_tries: int = 1000,
) -> ToyPortrait:
    """Draw latents around ``center`` (default: the mean latent) until hair and
    face cover sensible fractions of the image."""
    geo = generator.geometry
    if center is None:
        center = np.broadcast_to(generator.mean_latent, (geo.num_layers, geo.latent_dim))
    for _ in range(max_tries):
        w = center + spread * rng.standard_normal((geo.num_layers, geo.latent_dim))
        noise = [normalize_map(rng.standard_normal((s, s))) for s in geo.noise_sides]
        state = LatentState(w, noise)
        image = generator.synthesize(state)
        hair = toy_hair_mask(image, generator)
        face = toy_face_mask(image, generator)
        if min_hair <= hair.mean() <= max_hair and face.mean() >= min_face:
            return ToyPortrait(image, face, hair, state)
    raise RuntimeError("could not sample a toy portrait with the requested mask coverage")


@dataclass
class ToyTuple:
    identity: ToyPortrait
    shape_ref: ToyPortrait
    appearance_ref: ToyPortrait


def make_toy_tuple(
    generator: ToyGenerator, seed: int, spread: float = 1.0, shape_offset: float | None = 0.3
) -> ToyTuple:
    """Identity, shape reference and appearance reference portraits.

    The shape reference is drawn within ``shape_offset`` of the identity's
    latent, the toy analogue of a well-aligned tuple; ``None`` draws it
    independently. The appearance reference is always independent.
    """
    rng = np.random.default_rng(seed)
    identity = sample_portrait(generator, rng, spread=spread)
    if shape_offset is None:
        shape_ref = sample_portrait(generator, rng, spread=spread)
    else:
        shape_ref = sample_portrait(generator, rng, identity.state.w_plus, shape_offset)
    appearance = sample_portrait(generator, rng, spread=spread)
    return ToyTuple(identity, shape_ref, appearance)


def _template_landmarks(n: int = 68) -> np.ndarray:
    # unit-radius ellipse of jaw/brow points plus an inner ring for eyes, nose, mouth
    outer = np.linspace(0, 2 * np.pi, 40, endpoint=False)
    inner = np.linspace(0, 2 * np.pi, n - 40, endpoint=False)
    pts = np.concatenate([
        np.stack([np.cos(outer), 1.2 * np.sin(outer)], axis=1),
        0.45 * np.stack([np.cos(inner), np.sin(inner)], axis=1),
    ])
    return pts


def toy_landmarks(face_mask) -> np.ndarray:
    """68 pseudo-landmarks placed on the face mask's centroid and spread."""
    ys, xs = np.nonzero(as_mask(face_mask))
    centre = np.array([xs.mean(), ys.mean()])
    spread = np.array([xs.std(), ys.std()]) + 0.5
    return centre + _template_landmarks() * spread


def write_toy_corpus(generator: ToyGenerator, out_dir, count: int, seed: int = 0, **sample_kw):
    """Write ``count`` toy portraits in the data-directory layout; returns their ids."""
    from pathlib import Path

    from .generator import to_export
    from .io import write_image, write_landmarks, write_mask

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    ids = []
    for k in range(count):
        p = sample_portrait(generator, rng, **sample_kw)
        pid = f"toy{k:03d}"
        write_image(out / f"{pid}.png", to_export(p.image))
        write_mask(out / f"{pid}_face.png", p.face_mask)
        write_mask(out / f"{pid}_hair.png", p.hair_mask)
        write_landmarks(out / f"{pid}_landmarks.json", toy_landmarks(p.face_mask))
        ids.append(pid)
    return ids


def toy_problem(t: ToyTuple, dilate_frac: float = 0.2, erode_frac: float = 0.2):
    """Transfer problem for a toy tuple, with masks prepared as the pipeline does."""
    from .optimizer import TransferProblem
    from .pipeline import prepare_masks

    m = prepare_masks(t.shape_ref.hair_mask, t.identity.face_mask, dilate_frac, erode_frac)
    return TransferProblem(
        identity=t.identity.image,
        shape_ref=t.shape_ref.image,
        appearance_ref=t.appearance_ref.image,
        face_mask=m.face_target,
        structure_mask=m.eroded,
        appearance_mask=t.appearance_ref.hair_mask,
        synth_hair_mask=m.eroded,
    )
