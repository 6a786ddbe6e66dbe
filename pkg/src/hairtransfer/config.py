"""Run configuration: a YAML file with one mapping per section.

Sections are ``generator``, ``extractor``, ``optimizer``, ``masks``,
``blending`` and ``evaluation``. Missing keys take their defaults; unknown
keys are an error so typos do not pass silently.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .losses import LossWeights
from .optimizer import OptimizationConfig

SECTIONS = ("generator", "extractor", "optimizer", "masks", "blending", "evaluation")


@dataclass(frozen=True)
class BackendConfig:
    backend: str = "toy"
    seed: int = 0
    weights: str | None = None
    # extra keyword arguments for the backend constructor
    options: dict = field(default_factory=dict)


@dataclass(frozen=True)
class MaskConfig:
    dilate: float = 0.2
    erode: float = 0.2


@dataclass(frozen=True)
class BlendConfig:
    # None scales 5 px at 512^2 to the working resolution
    feather_sigma: float | None = None
    # e.g. "gatedconv --image {image} --mask {mask} --out {output}"
    inpaint_command: str | None = None
    inpaint_timeout: float = 120.0


@dataclass(frozen=True)
class EvalConfig:
    # "face_target" (face minus dilated hair) or "face" for PSNR/SSIM
    face_region: str = "face_target"


@dataclass(frozen=True)
class RunConfig:
    generator: BackendConfig = field(default_factory=BackendConfig)
    extractor: BackendConfig = field(default_factory=BackendConfig)
    optimizer: OptimizationConfig = field(default_factory=OptimizationConfig)
    masks: MaskConfig = field(default_factory=MaskConfig)
    blending: BlendConfig = field(default_factory=BlendConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self):
        if self.evaluation.face_region not in ("face_target", "face"):
            raise ValueError(f"unknown face_region {self.evaluation.face_region!r}")
        if not 0 < self.masks.dilate <= 1 or not 0 < self.masks.erode < 1:
            raise ValueError("mask fractions must satisfy 0 < dilate <= 1 and 0 < erode < 1")

    @classmethod
    def from_dict(cls, data: dict | None) -> "RunConfig":
        data = dict(data or {})
        unknown = set(data) - set(SECTIONS)
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        opt = dict(data.get("optimizer") or {})
        if "weights" in opt:
            opt["weights"] = _build(LossWeights, opt["weights"], "optimizer.weights")
        for key in ("betas",):
            if key in opt:
                opt[key] = tuple(opt[key])
        return cls(
            generator=_build(BackendConfig, data.get("generator"), "generator"),
            extractor=_build(BackendConfig, data.get("extractor"), "extractor"),
            optimizer=_build(OptimizationConfig, opt, "optimizer"),
            masks=_build(MaskConfig, data.get("masks"), "masks"),
            blending=_build(BlendConfig, data.get("blending"), "blending"),
            evaluation=_build(EvalConfig, data.get("evaluation"), "evaluation"),
        )

    def to_dict(self) -> dict:
        out = asdict(self)
        out["optimizer"]["betas"] = list(out["optimizer"]["betas"])
        return out

    def with_seed(self, seed: int) -> "RunConfig":
        return _replace_section(self, "optimizer", seed=seed)

    def with_optimizer(self, **changes) -> "RunConfig":
        return _replace_section(self, "optimizer", **changes)


def _replace_section(cfg, name, **changes):
    return replace(cfg, **{name: replace(getattr(cfg, name), **changes)})


def _build(kind, values, where):
    values = dict(values or {})
    names = {f.name for f in fields(kind)}
    unknown = set(values) - names
    if unknown:
        raise ValueError(f"unknown keys in {where}: {sorted(unknown)}")
    return kind(**values)


def load_config(path=None) -> RunConfig:
    """Read a YAML run config; ``None`` gives the defaults."""
    if path is None:
        return RunConfig()
    text = Path(path).read_text(encoding="utf-8")
    return RunConfig.from_dict(yaml.safe_load(text))


def dump_config(config: RunConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(config.to_dict(), sort_keys=True), encoding="utf-8")


def build_generator(cfg: BackendConfig):
    if cfg.backend == "toy":
        from .generator import ToyGenerator

        return ToyGenerator(seed=cfg.seed, **cfg.options)
    if cfg.backend == "pretrained":
        from .torch_backends import TorchScriptGenerator

        return TorchScriptGenerator(cfg.weights, **cfg.options)
    raise ValueError(f"unknown generator backend {cfg.backend!r}")


def build_extractor(cfg: BackendConfig):
    if cfg.backend == "toy":
        from .features import ToyExtractor

        return ToyExtractor(seed=cfg.seed, **cfg.options)
    if cfg.backend == "vgg16":
        from .torch_backends import VGG16Extractor

        return VGG16Extractor(cfg.weights, **cfg.options)
    raise ValueError(f"unknown extractor backend {cfg.backend!r}")
