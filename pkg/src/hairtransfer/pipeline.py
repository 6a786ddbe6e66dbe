"""End-to-end transfer jobs: masks, optimization, inpainting, blending, outputs.

One job writes into its own directory::

    result.png          blended output
    losses.csv          per-iteration loss log
    metrics.json        evaluation report
    prepared-masks/     dilated, eroded, ignore and face-target masks
"""
from __future__ import annotations

import hashlib
import json
import logging
import shlex
import subprocess
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig, build_extractor, build_generator
from .curation import DIFFICULT, EASY, MEDIUM, TupleRecord
from .errors import HairTransferError
from .evaluation import evaluation_report
from .generator import latent_distance, to_export
from .io import read_image, read_mask, write_image, write_mask
from .masks import (
    MorphStats,
    as_mask,
    dilate,
    erode,
    face_target_mask,
    fallback_inpaint,
    feather_sigma_for,
    ignore_region,
    soft_blend,
)
from .optimizer import RunResult, TransferProblem, run_two_stage

log = logging.getLogger(__name__)

EDIT_MODES = ("full", "appearance", "shape")
METRIC_KEYS = ("psnr", "ssim", "latent_distance", "hair_iou")


@dataclass
class Portrait:
    image: np.ndarray
    face_mask: np.ndarray
    hair_mask: np.ndarray

    @classmethod
    def load(cls, image, face_mask, hair_mask) -> "Portrait":
        return cls(read_image(image), read_mask(face_mask), read_mask(hair_mask))

    @classmethod
    def from_paths(cls, paths: dict, base_dir=".") -> "Portrait":
        base = Path(base_dir)
        return cls.load(base / paths["image"], base / paths["face_mask"], base / paths["hair_mask"])


@dataclass
class TransferJob:
    """One transfer. ``mode`` "appearance" keeps the identity's own hair
    structure; "shape" keeps its own hair appearance."""

    tuple_id: str
    identity: Portrait
    shape_ref: Portrait
    appearance_ref: Portrait
    config: RunConfig = field(default_factory=RunConfig)
    out_dir: Path | None = None
    mode: str = "full"
    category: str | None = None

    def __post_init__(self):
        if self.mode not in EDIT_MODES:
            raise ValueError(f"unknown edit mode {self.mode!r}; expected one of {EDIT_MODES}")
        if self.mode == "appearance":
            self.shape_ref = self.identity
        elif self.mode == "shape":
            self.appearance_ref = self.identity
        res = {p.image.shape for p in (self.identity, self.shape_ref, self.appearance_ref)}
        if len(res) != 1:
            raise ValueError(f"tuple images differ in shape: {sorted(res)}")


@dataclass
class PreparedMasks:
    dilated: np.ndarray
    eroded: np.ndarray
    ignore: np.ndarray
    face_target: np.ndarray
    dilate_stats: MorphStats
    erode_stats: MorphStats
    degenerate: bool

    def as_dict(self) -> dict[str, np.ndarray]:
        return {
            "dilated": self.dilated,
            "eroded": self.eroded,
            "ignore": self.ignore,
            "face_target": self.face_target,
        }


@dataclass
class Prepared:
    job: TransferJob
    masks: PreparedMasks
    problem: TransferProblem


@dataclass
class TransferResult:
    tuple_id: str
    image: np.ndarray
    synth: np.ndarray
    run: RunResult
    metrics: dict
    masks: PreparedMasks


def job_seed(seed: int, tuple_id: str) -> int:
    """Per-job seed derived from the config seed and the tuple id."""
    digest = hashlib.sha256(f"{seed}:{tuple_id}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


def prepare_masks(shape_hair, identity_face, dilate_frac=0.2, erode_frac=0.2) -> PreparedMasks:
    """Dilated, eroded and ignore masks of the reference hair plus the face target.

    A degenerate erosion (under ``MIN_ERODED_AREA`` pixels) falls back to the
    undilated hair mask as the supervised region.
    """
    hair = as_mask(shape_hair)
    dilated, dstats = dilate(hair, dilate_frac, return_stats=True)
    eroded, estats = erode(hair, erode_frac, return_stats=True)
    if estats.degenerate:
        log.warning("eroded hair mask has %d px; using the undilated mask", estats.achieved_area)
        eroded = hair.copy()
    ignore = ignore_region(dilated, eroded)
    face = face_target_mask(identity_face, dilated)
    # the ring is left to the generator: no loss may see it
    assert not np.any(ignore & face) and not np.any(ignore & eroded)
    return PreparedMasks(dilated, eroded, ignore, face, dstats, estats, estats.degenerate)


def prepare(job: TransferJob) -> Prepared:
    cfg = job.config.masks
    masks = prepare_masks(job.shape_ref.hair_mask, job.identity.face_mask, cfg.dilate, cfg.erode)
    problem = TransferProblem(
        identity=job.identity.image,
        shape_ref=job.shape_ref.image,
        appearance_ref=job.appearance_ref.image,
        face_mask=masks.face_target,
        structure_mask=masks.eroded,
        appearance_mask=as_mask(job.appearance_ref.hair_mask),
        synth_hair_mask=masks.eroded,
    )
    return Prepared(job, masks, problem)


def external_inpaint(command: str, image, hole, timeout: float = 120.0):
    """Run an inpainting command template; ``None`` on any failure.

    The template receives ``{image}``, ``{mask}`` and ``{output}`` PNG paths.
    """
    with tempfile.TemporaryDirectory() as tmp:
        paths = {k: str(Path(tmp) / f"{k}.png") for k in ("image", "mask", "output")}
        write_image(paths["image"], image)
        write_mask(paths["mask"], hole)
        argv = [part.format(**paths) for part in shlex.split(command)]
        try:
            subprocess.run(argv, check=True, timeout=timeout, capture_output=True)
            out = read_image(paths["output"])
        except (OSError, subprocess.SubprocessError, ValueError) as exc:
            log.warning("external inpainter failed (%s); using the fallback", exc)
            return None
    if out.shape != np.shape(image):
        log.warning("external inpainter returned shape %s; using the fallback", out.shape)
        return None
    return out


def inpaint_background(image, hole, command=None, timeout=120.0) -> np.ndarray:
    hole = as_mask(hole)
    if not hole.any():
        return np.array(image, dtype=np.float64)
    if command:
        out = external_inpaint(command, image, hole, timeout)
        if out is not None:
            # only the hole is taken from the tool
            return np.where(hole[None], out, image)
    return fallback_inpaint(image, hole)


def _synth_hair(generator, image):
    segment = getattr(generator, "hair_mask", None)
    return None if segment is None else as_mask(segment(image))


def execute(job: TransferJob, generator=None, extractor=None, prepared: Prepared | None = None):
    """Optimize, composite over the inpainted identity background, write outputs."""
    cfg = job.config
    generator = generator if generator is not None else build_generator(cfg.generator)
    extractor = extractor if extractor is not None else build_extractor(cfg.extractor)
    prepared = prepared or prepare(job)
    masks = prepared.masks
    out_dir = Path(job.out_dir) if job.out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    run = run_two_stage(
        generator,
        extractor,
        prepared.problem,
        cfg.optimizer,
        log_path=None if out_dir is None else out_dir / "losses.csv",
    )
    identity = job.identity
    foreground = as_mask(identity.face_mask) | as_mask(identity.hair_mask)
    background = inpaint_background(
        identity.image, foreground, cfg.blending.inpaint_command, cfg.blending.inpaint_timeout
    )
    sigma = cfg.blending.feather_sigma
    if sigma is None:
        sigma = feather_sigma_for(identity.image.shape[-1])
    support = as_mask(identity.face_mask) | masks.dilated
    synth = to_export(run.image)
    result = soft_blend(synth, background, support, sigma)

    eval_face = masks.face_target if cfg.evaluation.face_region == "face_target" else identity.face_mask
    synth_hair = _synth_hair(generator, run.image)
    metrics = evaluation_report(
        to_export(identity.image),
        synth,
        eval_face,
        job.shape_ref.hair_mask,
        synth_hair,
        latent_distance(run.state, generator),
        job.tuple_id,
        cfg.to_dict(),
    )
    metrics.update(
        mode=job.mode,
        category=job.category,
        degenerate_erosion=masks.degenerate,
        dilate_iterations=masks.dilate_stats.iterations,
        erode_iterations=masks.erode_stats.iterations,
    )
    if out_dir is not None:
        write_image(out_dir / "result.png", result)
        mask_dir = out_dir / "prepared-masks"
        mask_dir.mkdir(exist_ok=True)
        for name, m in masks.as_dict().items():
            write_mask(mask_dir / f"{name}.png", m)
        (out_dir / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True))
    return TransferResult(job.tuple_id, result, synth, run, metrics, masks)


def job_from_record(record: TupleRecord, config: RunConfig, data_dir, out_root=None) -> TransferJob:
    seeded = config.with_seed(job_seed(config.optimizer.seed, record.tuple_id))
    return TransferJob(
        tuple_id=record.tuple_id,
        identity=Portrait.from_paths(record.paths["identity"], data_dir),
        shape_ref=Portrait.from_paths(record.paths["shape"], data_dir),
        appearance_ref=Portrait.from_paths(record.paths["appearance"], data_dir),
        config=seeded,
        out_dir=None if out_root is None else Path(out_root) / record.tuple_id,
        category=record.category,
    )


def _run_record(record, config, data_dir, out_root, generator, extractor):
    try:
        job = job_from_record(record, config, data_dir, out_root)
        result = execute(job, generator, extractor)
    except (HairTransferError, ValueError, OSError, FloatingPointError) as exc:
        log.error("job %s failed: %s", record.tuple_id, exc)
        entry = {"tuple_id": record.tuple_id, "category": record.category, "status": "failed",
                 "error": f"{type(exc).__name__}: {exc}"}
        diagnostics = getattr(exc, "diagnostics", None)
        if diagnostics:
            entry["diagnostics"] = diagnostics
        return entry
    return {"tuple_id": record.tuple_id, "category": record.category, "status": "ok",
            "metrics": result.metrics}


def aggregate(entries) -> dict:
    """Mean of each metric per alignment category over successful jobs."""
    out = {}
    for category in (EASY, MEDIUM, DIFFICULT):
        ok = [e for e in entries if e["category"] == category and e["status"] == "ok"]
        if not ok:
            continue
        summary = {"count": len(ok)}
        for key in METRIC_KEYS:
            vals = [e["metrics"][key] for e in ok if e["metrics"].get(key) is not None]
            summary[key] = float(np.mean(vals)) if vals else None
        out[category] = summary
    return out


def run_batch(
    records, config: RunConfig, data_dir, out_root=None, jobs: int = 1, generator=None, extractor=None
) -> dict:
    """Run every manifest record with at most ``jobs`` concurrent workers.

    Backends are built once and shared. Failed jobs are reported, not raised.
    """
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    records = sorted(records, key=lambda r: r.tuple_id)
    generator = generator if generator is not None else build_generator(config.generator)
    extractor = extractor if extractor is not None else build_extractor(config.extractor)
    args = (config, data_dir, out_root, generator, extractor)
    if jobs == 1:
        entries = [_run_record(r, *args) for r in records]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            entries = list(pool.map(lambda r: _run_record(r, *args), records))
    report = {
        "jobs": entries,
        "categories": aggregate(entries),
        "failed": sum(e["status"] == "failed" for e in entries),
    }
    if out_root is not None:
        Path(out_root).mkdir(parents=True, exist_ok=True)
        (Path(out_root) / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    return report
