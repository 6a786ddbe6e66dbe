"""Two-stage latent optimization with gradient orthogonalization."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DivergenceError, ShapeError
from .generator import LatentState, init_latent_state, normalize_map
from .losses import (
    ALL_TERMS,
    FACE_LEVELS,
    STAGE1_TERMS,
    STRUCTURE_LEVELS,
    TERMS,
    AppearanceTerm,
    LossWeights,
    PerceptualTerm,
    StyleTerm,
    noise_regularization,
    total_loss,
)

log = logging.getLogger(__name__)

LOG_COLUMNS = ("iteration", "stage", *TERMS, "total", "learning_rate")


@dataclass(frozen=True)
class OptimizationConfig:
    stage1_iters: int = 1000
    stage2_iters: int = 1000
    lr0: float = 0.1
    weights: LossWeights = field(default_factory=LossWeights)
    go_enabled: bool = True
    # "all" projects over w_plus and noise together, "w_plus" over the latent rows only
    go_scope: str = "all"
    go_eps: float = 1e-12
    # stage-2 structure term when go_enabled is False: "raw" keeps its unprojected
    # gradient, "drop" weights it by zero (plain two-stage optimization)
    structure_without_go: str = "raw"
    seed: int = 0
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    normalize_noise: bool = True

    def __post_init__(self):
        if self.stage1_iters < 0 or self.stage2_iters < 0:
            raise ValueError("iteration counts must be >= 0")
        if not self.lr0 > 0:
            raise ValueError("lr0 must be > 0")
        if self.go_scope not in ("all", "w_plus"):
            raise ValueError(f"unknown go_scope {self.go_scope!r}")
        if self.structure_without_go not in ("drop", "raw"):
            raise ValueError(f"unknown structure_without_go {self.structure_without_go!r}")

    def stage_weights(self, stage: int) -> LossWeights:
        if stage == 2 and not self.go_enabled and self.structure_without_go == "drop":
            return replace(self.weights, structure=0.0)
        return self.weights


def orthogonalize(g_r, g_as, eps: float = 1e-12) -> np.ndarray:
    """Remove from ``g_r`` its component along ``g_as``."""
    g_r = np.asarray(g_r, dtype=np.float64)
    g_as = np.asarray(g_as, dtype=np.float64)
    if g_r.shape != g_as.shape:
        raise ShapeError(f"gradient lengths differ: {g_r.shape} vs {g_as.shape}")
    denom = float(g_as @ g_as)
    if denom <= eps:
        return g_r.copy()
    out = g_r - (float(g_r @ g_as) / denom) * g_as
    # a second pass cleans the residual left by cancellation when g_r is nearly parallel
    residual = float(out @ g_as)
    if residual != 0.0:
        out = out - (residual / denom) * g_as
    return out


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n))


def adam_step(params, grad, state: AdamState, lr: float, betas=(0.9, 0.999), eps=1e-8):
    """One bias-corrected Adam update. Mutates ``state``, returns new params."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.shape:
        raise ShapeError(f"gradient shape {grad.shape} vs params {params.shape}")
    if not np.all(np.isfinite(grad)):
        raise DivergenceError(
            "non-finite gradient",
            {"step": state.t, "nonfinite": int(np.count_nonzero(~np.isfinite(grad)))},
        )
    b1, b2 = betas
    state.t += 1
    state.m = b1 * state.m + (1 - b1) * grad
    state.v = b2 * state.v + (1 - b2) * grad * grad
    m_hat = state.m / (1 - b1**state.t)
    v_hat = state.v / (1 - b2**state.t)
    return params - lr * m_hat / (np.sqrt(v_hat) + eps)


def cosine_lr(iteration: int, total: int, lr0: float) -> float:
    if total < 1 or not 0 <= iteration <= total:
        raise ValueError(f"need 0 <= iteration <= total and total >= 1, got {iteration}/{total}")
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * iteration / total))


@dataclass
class TransferProblem:
    """Images and masks driving one optimization.

    ``structure_mask`` is the eroded reference hair mask. ``synth_hair_mask``
    stands in for the hair region of the synthesized image inside the
    appearance and style terms; it is held fixed during optimization.
    """

    identity: np.ndarray
    shape_ref: np.ndarray
    appearance_ref: np.ndarray
    face_mask: np.ndarray
    structure_mask: np.ndarray
    appearance_mask: np.ndarray
    synth_hair_mask: np.ndarray


class Objective:
    """All loss terms of one problem, evaluated against a generator's latent state."""

    def __init__(self, generator, extractor, problem: TransferProblem):
        self.generator = generator
        p = problem
        self.face = PerceptualTerm(extractor, p.identity, p.face_mask, FACE_LEVELS)
        self.structure = PerceptualTerm(extractor, p.shape_ref, p.structure_mask, STRUCTURE_LEVELS)
        self.appearance = AppearanceTerm(
            extractor, p.appearance_ref, p.appearance_mask, p.synth_hair_mask
        )
        self.style = StyleTerm(extractor, p.appearance_ref, p.appearance_mask, p.synth_hair_mask)
        # appearance/style measured against the structure reference, used only to orthogonalize
        self.appearance_ref2 = AppearanceTerm(
            extractor, p.shape_ref, p.structure_mask, p.synth_hair_mask
        )
        self.style_ref2 = StyleTerm(extractor, p.shape_ref, p.structure_mask, p.synth_hair_mask)

    def image_terms(self):
        return {
            "face": self.face,
            "structure": self.structure,
            "appearance": self.appearance,
            "style": self.style,
        }

    def values(self, state: LatentState, enabled=ALL_TERMS) -> dict[str, float | None]:
        image = self.generator.synthesize(state)
        out = {}
        for name, term in self.image_terms().items():
            out[name] = term(image, grad=False) if name in enabled else None
        out["noise"] = noise_regularization(state.noise) if "noise" in enabled else None
        return out

    def _pull(self, state, grad_image):
        return self.generator.vjp(state, grad_image).flatten()

    def evaluate(self, state: LatentState, weights: LossWeights, enabled, go: bool, go_scope="all"):
        """Loss bundle at ``state`` plus the flat descent direction.

        Returns ``(bundle, direction, go_info)``. ``go_info`` is ``None`` unless
        orthogonalization ran, else holds the raw and projected structure
        gradients and the appearance+style gradient they were projected against.
        """
        image = self.generator.synthesize(state)
        w = weights.as_dict()
        values, grads = {}, {}
        combined = np.zeros_like(image)
        for name, term in self.image_terms().items():
            if name not in enabled:
                continue
            values[name], g_img = term(image)
            grads[name] = g_img
            if not (go and name == "structure"):
                combined += w[name] * g_img
        direction = self._pull(state, combined)
        if "noise" in enabled:
            values["noise"], g_noise = noise_regularization(state.noise, grad=True)
            flat_noise = np.concatenate([np.zeros(state.w_plus.size), *(g.ravel() for g in g_noise)])
            direction = direction + w["noise"] * flat_noise
        go_info = None
        if go and "structure" in enabled:
            g_r = self._pull(state, grads["structure"])
            _, g_a = self.appearance_ref2(image)
            _, g_s = self.style_ref2(image)
            g_as = self._pull(state, g_a + g_s)
            if go_scope == "w_plus":
                k = state.w_plus.size
                g_r_proj = g_r.copy()
                g_r_proj[:k] = orthogonalize(g_r[:k], g_as[:k])
            else:
                g_r_proj = orthogonalize(g_r, g_as)
            direction = direction + w["structure"] * g_r_proj
            go_info = {"g_r": g_r, "g_r_proj": g_r_proj, "g_as": g_as}
        full = {name: values.get(name) for name in TERMS}
        bundle = total_loss(full, weights, enabled)
        return bundle, direction, go_info


@dataclass
class RunResult:
    state: LatentState
    image: np.ndarray
    log: list[dict]
    stage_end: dict[int, dict[str, float]]
    go_trace: list[dict] = field(default_factory=list)


def _check_finite(values, iteration, stage):
    bad = {k: v for k, v in values.items() if v is not None and not np.isfinite(v)}
    if bad:
        raise DivergenceError(f"non-finite loss at iteration {iteration}", {"stage": stage, **bad})


def run_two_stage(
    generator,
    extractor,
    problem: TransferProblem,
    config: OptimizationConfig,
    state: LatentState | None = None,
    log_path=None,
) -> RunResult:
    """Stage 1 fits face, structure and noise terms; stage 2 adds appearance and style.

    With ``go_enabled`` the stage-2 structure gradient is projected orthogonal
    to the appearance+style gradient (both measured against the structure
    reference) before the step. Without it the raw structure gradient is used,
    or the term is dropped from stage 2 when ``structure_without_go="drop"``.
    """
    objective = Objective(generator, extractor, problem)
    if state is None:
        state = init_latent_state(generator, config.seed)
    state = state.copy()
    params = state.flatten()
    adam = AdamState.zeros(params.size)
    rows: list[dict] = []
    go_trace: list[dict] = []
    stage_end = {}
    iteration = 0
    stages = ((1, config.stage1_iters, STAGE1_TERMS), (2, config.stage2_iters, ALL_TERMS))
    for stage, iters, enabled in stages:
        go = stage == 2 and config.go_enabled
        weights = config.stage_weights(stage)
        for i in range(iters):
            lr = cosine_lr(i, iters, config.lr0)
            bundle, direction, go_info = objective.evaluate(
                state, weights, enabled, go, config.go_scope
            )
            _check_finite(bundle.values, iteration, stage)
            rows.append(
                {"iteration": iteration, "stage": stage, **bundle.values,
                 "total": bundle.total, "learning_rate": lr}
            )
            if go_info is not None:
                g_rp, g_as = go_info["g_r_proj"], go_info["g_as"]
                go_trace.append({
                    "iteration": iteration,
                    "dot_before": float(go_info["g_r"] @ g_as),
                    "dot_after": float(g_rp @ g_as),
                    "norm_r": float(np.linalg.norm(go_info["g_r"])),
                    "norm_r_proj": float(np.linalg.norm(g_rp)),
                    "norm_as": float(np.linalg.norm(g_as)),
                })
            try:
                params = adam_step(params, direction, adam, lr, config.betas, config.adam_eps)
            except DivergenceError as exc:
                exc.diagnostics.update({"iteration": iteration, "stage": stage})
                raise
            state = state.unflatten(params)
            if config.normalize_noise:
                state.noise = [normalize_map(n) for n in state.noise]
                params = state.flatten()
            iteration += 1
        if iters:
            log.debug("stage %d done after %d iterations", stage, iters)
        stage_end[stage] = objective.values(state)
    image = generator.synthesize(state)
    if log_path is not None:
        write_loss_log(rows, log_path)
    return RunResult(state, image, rows, stage_end, go_trace)


def write_loss_log(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row[k] is None else repr(row[k])) for k in LOG_COLUMNS})


def read_loss_log(path) -> list[dict]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            parsed = {}
            for k, v in row.items():
                if k in ("iteration", "stage"):
                    parsed[k] = int(v)
                else:
                    parsed[k] = None if v == "" else float(v)
            out.append(parsed)
    return out
