"""Per-pixel gradient visualization for image fusion networks.

The package trains small fusion models on image pairs and exposes their
pixel-level behavior: hover over an output pixel to see both input
Jacobian images from a single backward pass, or precompute guidance
images holding each output pixel's gradient with respect to the same
input pixel. A FastAPI service streams these over HTTP and WebSocket
for interactive front ends; the CLI covers batch training, sweeps,
guidance export, benchmarking, and serving.
"""

from .autodiff import (
    DegenerateBatchError,
    Graph,
    ImageShape,
    NoGraphError,
    PixelIndexError,
    ShapeError,
    Tensor,
    backward,
)
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .data import (
    ImageFormatError,
    ImagePair,
    SyntheticSpec,
    load_image,
    load_pairs,
    save_image,
    save_pairs,
    synth_pair,
    synth_pairs,
)
from .losses import LossConfig, LossReport, compose_report, rms, ssim, total_loss
from .models import (
    MODEL_NAMES,
    DegeneratePixelError,
    FusionModel,
    analytic_wavg_gradient,
    build_model,
    fuse_images,
    weighted_average,
)
from .optim import Adam
from .saliency import (
    DisplayConfig,
    ForwardPass,
    GuidanceCancelled,
    GuidanceImage,
    GuidanceRGB,
    JacobianImage,
    ScatterData,
    display_normalize,
    display_normalize_pair,
    gamma_correct,
    guidance_image,
    guidance_pair,
    guidance_rgb,
    jacobian_pair,
    neighborhood_indices,
    rf_mask,
    scatter_csv,
    scatter_data,
)
from .service import ServiceConfig, create_app, load_config, serve
from .training import (
    SweepRow,
    TrainResult,
    TrainRunConfig,
    TrainingDivergedError,
    best_balance,
    loss_csv,
    sweep,
    sweep_csv,
    train,
    write_loss_csv,
)

__version__ = "1.0.0"

__all__ = [
    "Adam",
    "CheckpointError",
    "DegenerateBatchError",
    "DegeneratePixelError",
    "DisplayConfig",
    "ForwardPass",
    "FusionModel",
    "Graph",
    "GuidanceCancelled",
    "GuidanceImage",
    "GuidanceRGB",
    "ImageFormatError",
    "ImagePair",
    "ImageShape",
    "JacobianImage",
    "LossConfig",
    "LossReport",
    "MODEL_NAMES",
    "NoGraphError",
    "PixelIndexError",
    "ScatterData",
    "ServiceConfig",
    "ShapeError",
    "SweepRow",
    "SyntheticSpec",
    "Tensor",
    "TrainResult",
    "TrainRunConfig",
    "TrainingDivergedError",
    "analytic_wavg_gradient",
    "backward",
    "best_balance",
    "build_model",
    "compose_report",
    "create_app",
    "display_normalize",
    "display_normalize_pair",
    "fuse_images",
    "gamma_correct",
    "guidance_image",
    "guidance_pair",
    "guidance_rgb",
    "jacobian_pair",
    "load_checkpoint",
    "load_config",
    "load_image",
    "load_pairs",
    "loss_csv",
    "neighborhood_indices",
    "rf_mask",
    "rms",
    "save_checkpoint",
    "save_image",
    "save_pairs",
    "scatter_csv",
    "scatter_data",
    "serve",
    "ssim",
    "sweep",
    "sweep_csv",
    "synth_pair",
    "synth_pairs",
    "total_loss",
    "train",
    "weighted_average",
    "write_loss_csv",
]
