"""Tuple selection and alignment categories from masks and landmark files.

A data directory holds, for every portrait ``<id>``::

    <id>.png              RGB image
    <id>_face.png         face mask
    <id>_hair.png         hair mask
    <id>_landmarks.json   68 [x, y] pairs
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import LandmarkError, ManifestError
from .io import read_landmarks, read_mask
from .masks import as_mask, mask_iou

MIN_HAIR_FRACTION = 0.18

EASY, MEDIUM, DIFFICULT, REJECTED = "Easy", "Medium", "Difficult", "Rejected"

# (category, iou_low exclusive, iou_high inclusive, pd_low inclusive, pd_high exclusive)
ALIGNMENT_TABLE = (
    (EASY, 0.8, 1.0, 0.0, 2.0),
    (MEDIUM, 0.7, 0.8, 2.0, 4.0),
    (DIFFICULT, 0.6, 0.7, 4.0, 5.0),
)

_SUFFIXES = ("_face.png", "_hair.png")


def hair_fraction(hair_mask) -> float:
    hair_mask = as_mask(hair_mask)
    return np.count_nonzero(hair_mask) / hair_mask.size


def pose_distance(k1, k2) -> float:
    """Mean Euclidean distance between corresponding landmarks."""
    k1 = np.asarray(k1, dtype=np.float64)
    k2 = np.asarray(k2, dtype=np.float64)
    if k1.shape != k2.shape or k1.ndim != 2 or k1.shape[1] != 2:
        raise LandmarkError(f"landmark sets differ: {k1.shape} vs {k2.shape}")
    return float(np.mean(np.linalg.norm(k1 - k2, axis=1)))


def categorize(iou: float, pd: float) -> str:
    """Alignment category; both the IoU and the PD interval must hold."""
    for name, iou_lo, iou_hi, pd_lo, pd_hi in ALIGNMENT_TABLE:
        if iou_lo < iou <= iou_hi and pd_lo <= pd < pd_hi:
            return name
    return REJECTED


@dataclass(frozen=True)
class TupleRecord:
    tuple_id: str
    identity: str
    shape: str
    appearance: str
    paths: dict
    iou: float
    pd: float
    category: str
    resolution: list

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "TupleRecord":
        return cls(**json.loads(line))


def _portrait_paths(image_id):
    return {
        "image": f"{image_id}.png",
        "face_mask": f"{image_id}_face.png",
        "hair_mask": f"{image_id}_hair.png",
        "landmarks": f"{image_id}_landmarks.json",
    }


def list_portraits(data_dir) -> list[str]:
    data_dir = Path(data_dir)
    ids = []
    for p in sorted(data_dir.glob("*.png")):
        if not p.name.endswith(_SUFFIXES):
            ids.append(p.stem)
    return ids


def _load_portrait(data_dir, image_id):
    paths = _portrait_paths(image_id)
    for rel in paths.values():
        if not (data_dir / rel).is_file():
            raise ManifestError(f"missing companion file {rel} for portrait {image_id}")
    face = read_mask(data_dir / paths["face_mask"])
    hair = read_mask(data_dir / paths["hair_mask"])
    landmarks = read_landmarks(data_dir / paths["landmarks"], face.shape)
    return {"face": face, "hair": hair, "landmarks": landmarks, "paths": paths}


def build_manifest(
    data_dir, min_hair: float = MIN_HAIR_FRACTION, include_rejected: bool = True
) -> list[TupleRecord]:
    """Enumerate (identity, shape, appearance) tuples over a portrait directory.

    Portraits with less than ``min_hair`` hair coverage are dropped. IoU and
    pose distance compare identity with shape reference only; the appearance
    reference ranges over every remaining portrait. Paths are relative to
    ``data_dir`` and the order is lexicographic in the portrait ids.
    """
    data_dir = Path(data_dir)
    portraits = {pid: _load_portrait(data_dir, pid) for pid in list_portraits(data_dir)}
    valid = [pid for pid, p in portraits.items() if hair_fraction(p["hair"]) >= min_hair]
    records = []
    for a in valid:
        pa = portraits[a]
        for b in valid:
            pb = portraits[b]
            iou = mask_iou(pa["face"], pb["face"])
            pd = pose_distance(pa["landmarks"], pb["landmarks"])
            category = categorize(iou, pd)
            if category == REJECTED and not include_rejected:
                continue
            for c in valid:
                records.append(
                    TupleRecord(
                        tuple_id=f"{a}__{b}__{c}",
                        identity=a,
                        shape=b,
                        appearance=c,
                        paths={
                            "identity": pa["paths"],
                            "shape": pb["paths"],
                            "appearance": portraits[c]["paths"],
                        },
                        iou=iou,
                        pd=pd,
                        category=category,
                        resolution=list(pa["face"].shape),
                    )
                )
    return sorted(records, key=lambda r: r.tuple_id)


def write_manifest(records, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            fh.write(record.to_json() + "\n")


def read_manifest(path) -> list[TupleRecord]:
    with open(path, encoding="utf-8") as fh:
        return [TupleRecord.from_json(line) for line in fh if line.strip()]
