import pytest
import yaml

from hairtransfer.config import RunConfig, build_extractor, build_generator, dump_config, load_config
from hairtransfer.features import ToyExtractor
from hairtransfer.generator import ToyGenerator
from hairtransfer.losses import LossWeights


def test_defaults():
    cfg = load_config()
    assert cfg == RunConfig()
    assert cfg.optimizer.weights == LossWeights()
    assert cfg.optimizer.stage1_iters == cfg.optimizer.stage2_iters == 1000


def test_yaml_roundtrip(tmp_path):
    cfg = RunConfig.from_dict({
        "optimizer": {"stage1_iters": 7, "betas": [0.8, 0.99], "weights": {"style": 2.0}},
        "blending": {"feather_sigma": 0.0},
        "evaluation": {"face_region": "face"},
    })
    assert cfg.optimizer.betas == (0.8, 0.99) and cfg.optimizer.weights.style == 2.0
    dump_config(cfg, tmp_path / "c.yaml")
    assert load_config(tmp_path / "c.yaml") == cfg


def test_partial_file(tmp_path):
    (tmp_path / "c.yaml").write_text("optimizer:\n  lr0: 0.05\nmasks:\n  erode: 0.3\n")
    cfg = load_config(tmp_path / "c.yaml")
    assert cfg.optimizer.lr0 == 0.05 and cfg.masks.erode == 0.3 and cfg.masks.dilate == 0.2


@pytest.mark.parametrize("data", [
    {"optimiser": {}},
    {"optimizer": {"lr": 0.1}},
    {"optimizer": {"weights": {"colour": 1.0}}},
    {"optimizer": {"go_scope": "noise"}},
    {"evaluation": {"face_region": "hair"}},
    {"masks": {"erode": 1.0}},
])
def test_rejects_bad_values(data):
    with pytest.raises(ValueError):
        RunConfig.from_dict(data)


def test_with_seed_and_to_dict():
    cfg = RunConfig().with_seed(9)
    assert cfg.optimizer.seed == 9 and RunConfig().optimizer.seed == 0
    assert yaml.safe_load(yaml.safe_dump(cfg.to_dict()))["optimizer"]["seed"] == 9


def test_backends():
    cfg = RunConfig.from_dict({"generator": {"seed": 2, "options": {"resolution": 16, "noise_sides": [4, 16]}}})
    gen = build_generator(cfg.generator)
    assert isinstance(gen, ToyGenerator) and gen.geometry.resolution == 16
    assert isinstance(build_extractor(cfg.extractor), ToyExtractor)
    with pytest.raises(ValueError):
        build_generator(RunConfig.from_dict({"generator": {"backend": "gan"}}).generator)
