import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from hairtransfer import pipeline
from hairtransfer.config import BlendConfig, MaskConfig, RunConfig
from hairtransfer.curation import EASY, MEDIUM, build_manifest
from hairtransfer.errors import DivergenceError
from hairtransfer.evaluation import hair_iou_eval
from hairtransfer.generator import ToyGenerator, init_latent_state, to_export
from hairtransfer.io import read_image, read_mask
from hairtransfer.masks import as_mask, dilate, soft_blend
from hairtransfer.optimizer import Objective
from hairtransfer.losses import ALL_TERMS
from hairtransfer.pipeline import (
    Portrait,
    TransferJob,
    aggregate,
    execute,
    inpaint_background,
    job_seed,
    prepare,
    prepare_masks,
    run_batch,
)
from hairtransfer.toy import make_toy_tuple, write_toy_corpus

DATA = Path(__file__).parent / "data"
sys.path.insert(0, str(DATA))
from make_pipeline_goldens import golden_job  # noqa: E402

SHORT = RunConfig().with_optimizer(stage1_iters=20, stage2_iters=20)
HARD = replace(SHORT, blending=BlendConfig(feather_sigma=0.0))


def portraits(t):
    return [Portrait(p.image, p.face_mask, p.hair_mask) for p in (t.identity, t.shape_ref, t.appearance_ref)]


@pytest.fixture(scope="module")
def toy_dir(tmp_path_factory, gen):
    d = tmp_path_factory.mktemp("toydata")
    write_toy_corpus(gen, d, 4, seed=3)
    return d


@pytest.fixture(scope="module")
def toy_records(toy_dir):
    return build_manifest(toy_dir)


def test_zero_iterations_blends_initialization(gen, ext, toy_tuple, tmp_path):
    cfg = replace(HARD.with_optimizer(stage1_iters=0, stage2_iters=0))
    job = TransferJob("z", *portraits(toy_tuple), config=cfg, out_dir=tmp_path)
    res = execute(job, gen, ext)
    init = to_export(gen.synthesize(init_latent_state(gen, 0)))
    ident = job.identity
    bg = inpaint_background(ident.image, as_mask(ident.face_mask) | as_mask(ident.hair_mask))
    support = as_mask(ident.face_mask) | res.masks.dilated
    assert np.array_equal(res.image, soft_blend(init, bg, support, 0.0))
    assert res.run.log == []
    for name in ("result.png", "losses.csv", "metrics.json"):
        assert (tmp_path / name).is_file()
    for name in ("dilated", "eroded", "ignore", "face_target"):
        assert (tmp_path / "prepared-masks" / f"{name}.png").is_file()


def test_background_invariance(gen, ext):
    for seed in range(3):
        t = make_toy_tuple(gen, seed, shape_offset=None)
        job = TransferJob("b", *portraits(t), config=HARD)
        res = execute(job, gen, ext)
        ident = job.identity
        untouched = ~(as_mask(ident.face_mask) | res.masks.dilated | as_mask(ident.hair_mask))
        assert untouched.any()
        assert np.array_equal(res.image[:, untouched], ident.image[:, untouched])


def test_background_invariance_identity_tuple(gen, ext, toy_tuple):
    # the identity's own hair lies inside the dilated mask, so only the support changes
    me = portraits(toy_tuple)[0]
    res = execute(TransferJob("self", me, me, me, config=HARD), gen, ext)
    outside = ~(as_mask(me.face_mask) | res.masks.dilated | res.masks.ignore)
    assert np.array_equal(res.image[:, outside], me.image[:, outside])


def test_ignore_region_contract(gen, ext, toy_tuple, rng):
    cfg = replace(SHORT, masks=MaskConfig(dilate=0.8, erode=0.6))
    job = TransferJob("i", *portraits(toy_tuple), config=cfg)
    prepared = prepare(job)
    ring = prepared.masks.ignore
    assert ring.any()
    state = init_latent_state(gen, 0)
    base = Objective(gen, ext, prepared.problem).values(state, ALL_TERMS)
    perturbed = job.shape_ref.image.copy()
    perturbed[:, ring] = rng.random((3, ring.sum()))
    problem = replace(prepared.problem, shape_ref=perturbed)
    assert Objective(gen, ext, problem).values(state, ALL_TERMS) == base


def test_prepare_masks_relations(toy_tuple):
    m = prepare_masks(toy_tuple.shape_ref.hair_mask, toy_tuple.identity.face_mask)
    assert np.all(m.eroded <= m.dilated) and np.array_equal(m.ignore, m.dilated & ~m.eroded)
    assert not (m.face_target & m.dilated).any()


def test_degenerate_erosion_falls_back():
    hair = np.zeros((32, 32), bool)
    hair[10:13, 10:13] = True
    face = np.zeros((32, 32), bool)
    face[16:28, 8:24] = True
    m = prepare_masks(hair, face, 0.2, 0.9)
    assert m.degenerate and np.array_equal(m.eroded, hair)
    assert not (m.ignore & m.eroded).any()


def test_identity_tuple_prepares(toy_tuple):
    me = portraits(toy_tuple)[0]
    p = prepare(TransferJob("self", me, me, me))
    assert np.array_equal(p.masks.dilated, dilate(me.hair_mask, 0.2))


def test_edit_modes_replace_references(toy_tuple):
    ident, shape, app = portraits(toy_tuple)
    assert TransferJob("a", ident, shape, app, mode="appearance").shape_ref is ident
    assert TransferJob("s", ident, shape, app, mode="shape").appearance_ref is ident
    with pytest.raises(ValueError):
        TransferJob("x", ident, shape, app, mode="colour")


def test_golden_prepared_masks():
    _, job = golden_job()
    masks = prepare(job).masks.as_dict()
    for name, m in masks.items():
        assert np.array_equal(m, read_mask(DATA / "golden_masks" / f"{name}.png")), name


def test_golden_metrics(ext):
    gen, job = golden_job()
    metrics = execute(job, gen, ext).metrics
    golden = json.loads((DATA / "golden_metrics.json").read_text())
    for key, want in golden.items():
        assert metrics[key] == pytest.approx(want, rel=1e-6, abs=1e-9), key


def test_job_seed():
    assert job_seed(0, "a") == job_seed(0, "a")
    assert len({job_seed(0, "a"), job_seed(1, "a"), job_seed(0, "b")}) == 3
    assert 0 <= job_seed(7, "x") < 2**32


def test_batch_parallelism_identical(gen, ext, toy_dir, toy_records, tmp_path):
    recs = toy_records[:6]
    reports = {}
    for jobs in (1, 4):
        out = tmp_path / f"j{jobs}"
        reports[jobs] = run_batch(recs, SHORT, toy_dir, out, jobs, gen, ext)
        assert reports[jobs]["failed"] == 0
    assert reports[1] == reports[4]
    for r in recs:
        a = (tmp_path / "j1" / r.tuple_id / "losses.csv").read_bytes()
        assert a == (tmp_path / "j4" / r.tuple_id / "losses.csv").read_bytes()
        assert np.array_equal(read_image(tmp_path / "j1" / r.tuple_id / "result.png"),
                              read_image(tmp_path / "j4" / r.tuple_id / "result.png"))


def test_empty_manifest(gen, ext, tmp_path):
    rep = run_batch([], SHORT, tmp_path, tmp_path / "out", 2, gen, ext)
    assert rep == {"jobs": [], "categories": {}, "failed": 0}
    assert json.loads((tmp_path / "out" / "report.json").read_text()) == rep


def test_aggregate_hand_averaged(gen, ext, toy_dir, toy_records):
    recs = [replace(r, category=c) for r, c in zip(toy_records[:3], (EASY, EASY, MEDIUM))]
    rep = run_batch(recs, SHORT, toy_dir, None, 1, gen, ext)
    by_id = {e["tuple_id"]: e["metrics"] for e in rep["jobs"]}
    a, b, c = (by_id[r.tuple_id] for r in recs)
    for key in ("psnr", "ssim", "latent_distance"):
        assert rep["categories"][EASY][key] == pytest.approx((a[key] + b[key]) / 2, rel=1e-12)
        assert rep["categories"][MEDIUM][key] == pytest.approx(c[key], rel=1e-12)
    assert rep["categories"][EASY]["count"] == 2


def test_aggregate_skips_failures_and_missing():
    entries = [
        {"category": EASY, "status": "ok", "metrics": {"psnr": 10.0, "ssim": 0.5, "latent_distance": 1.0, "hair_iou": None}},
        {"category": EASY, "status": "ok", "metrics": {"psnr": 20.0, "ssim": 0.7, "latent_distance": 3.0, "hair_iou": 0.4}},
        {"category": EASY, "status": "failed"},
    ]
    agg = aggregate(entries)[EASY]
    assert agg == {"count": 2, "psnr": 15.0, "ssim": pytest.approx(0.6), "latent_distance": 2.0, "hair_iou": 0.4}


def test_failures_isolated(gen, ext, toy_dir, toy_records, monkeypatch):
    recs = toy_records[:3]
    doomed = recs[1].tuple_id
    real = pipeline.execute

    def flaky(job, *a, **kw):
        if job.tuple_id == doomed:
            raise DivergenceError("non-finite loss", {"stage": 2, "face": float("nan")})
        return real(job, *a, **kw)

    monkeypatch.setattr(pipeline, "execute", flaky)
    rep = run_batch(recs, SHORT, toy_dir, None, 2, gen, ext)
    status = {e["tuple_id"]: e for e in rep["jobs"]}
    assert rep["failed"] == 1 and status[doomed]["status"] == "failed"
    assert status[doomed]["diagnostics"]["stage"] == 2
    assert all(status[r.tuple_id]["status"] == "ok" for r in recs if r.tuple_id != doomed)


def test_missing_files_fail_one_job(gen, ext, toy_dir, toy_records, tmp_path):
    rec = toy_records[0]
    broken = replace(rec, tuple_id="zz-broken", paths={**rec.paths, "shape": {**rec.paths["shape"], "image": "nope.png"}})
    rep = run_batch([rec, broken], SHORT, toy_dir, None, 1, gen, ext)
    assert [e["status"] for e in rep["jobs"]] == ["ok", "failed"]


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_real_divergence_reported(ext, toy_dir, toy_records):
    cfg = SHORT.with_optimizer(lr0=1e200)
    rep = run_batch(toy_records[:1], cfg, toy_dir, None, 1, ToyGenerator(0), ext)
    assert rep["failed"] == 1 and "Divergence" in rep["jobs"][0]["error"]


def write_script(path, body):
    path.write_text(body)
    return f"{sys.executable} {path}"


def test_external_inpaint_command(toy_tuple, tmp_path):
    script = write_script(tmp_path / "fill.py", (
        "import sys\nfrom PIL import Image\n"
        "img = Image.open(sys.argv[1]); img.paste((255, 0, 0), (0, 0) + img.size); img.save(sys.argv[3])\n"
    ))
    img = np.clip(toy_tuple.identity.image, 0, 1)
    hole = np.zeros(img.shape[1:], bool)
    hole[4:10, 4:10] = True
    out = inpaint_background(img, hole, script + " {image} {mask} {output}")
    assert np.all(out[:, hole] == np.array([1.0, 0.0, 0.0])[:, None])
    assert np.array_equal(out[:, ~hole], img[:, ~hole])


@pytest.mark.parametrize("body,timeout", [("raise SystemExit(3)\n", 30.0), ("import time; time.sleep(5)\n", 0.5)])
def test_external_inpaint_falls_back(toy_tuple, tmp_path, body, timeout):
    cmd = write_script(tmp_path / "bad.py", body) + " {image} {mask} {output}"
    img = np.clip(toy_tuple.identity.image, 0, 1)
    hole = np.zeros(img.shape[1:], bool)
    hole[4:10, 4:10] = True
    out = inpaint_background(img, hole, cmd, timeout)
    assert np.array_equal(out, inpaint_background(img, hole))


def edit_drift(gen, ext, seeds, iters):
    cfg = RunConfig().with_optimizer(stage1_iters=iters, stage2_iters=iters)
    drift = []
    for seed in seeds:
        ident, _, app = portraits(make_toy_tuple(gen, seed))
        base = execute(TransferJob("base", ident, ident, ident, config=cfg), gen, ext)
        edit = execute(TransferJob("edit", ident, app, app, config=cfg, mode="appearance"), gen, ext)
        hair = ident.hair_mask
        drift.append(abs(hair_iou_eval(hair, gen.hair_mask(edit.run.image))
                         - hair_iou_eval(hair, gen.hair_mask(base.run.image))))
    return float(np.mean(drift))


@pytest.mark.xfail(strict=True, reason="toy hair segmentation reads the colour channel the edit moves")
def test_appearance_edit_preserves_shape(gen, ext):
    assert edit_drift(gen, ext, range(5), 100) <= 0.05
