"""Hair attribute transfer by two-stage latent optimization with gradient orthogonalization."""
from .config import RunConfig, load_config
from .curation import TupleRecord, build_manifest, categorize, pose_distance
from .errors import (
    DivergenceError,
    EmptyMask,
    EmptyRegion,
    HairTransferError,
    ShapeError,
)
from .evaluation import FeatureSetStats, frechet_distance, psnr, ssim
from .features import ToyExtractor, gram, mean_appearance, perceptual_distance
from .generator import LatentState, ToyGenerator, init_latent_state, latent_distance
from .losses import LossWeights, noise_regularization, total_loss
from .masks import dilate, erode, ignore_region, mask_iou, soft_blend
from .optimizer import OptimizationConfig, TransferProblem, orthogonalize, run_two_stage
from .pipeline import TransferJob, execute, prepare, run_batch

__version__ = "0.1.0"

__all__ = [
    "DivergenceError", "EmptyMask", "EmptyRegion", "FeatureSetStats", "HairTransferError",
    "LatentState", "LossWeights", "OptimizationConfig", "RunConfig", "ShapeError",
    "ToyExtractor", "ToyGenerator", "TransferJob", "TransferProblem", "TupleRecord",
    "build_manifest", "categorize", "dilate", "erode", "execute", "frechet_distance", "gram",
    "ignore_region", "init_latent_state", "latent_distance", "load_config", "mask_iou",
    "mean_appearance", "noise_regularization", "orthogonalize", "perceptual_distance",
    "pose_distance", "prepare", "psnr", "run_batch", "run_two_stage", "soft_blend", "ssim",
    "total_loss",
]
