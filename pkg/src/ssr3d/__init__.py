"""Spatial-spectral residual network for hyperspectral image super-resolution.

A self-contained numpy implementation: rank-5 tensors with tape-based
reverse-mode differentiation, separable 3D convolution blocks, residual
modules with local feature fusion and global residual learning, bicubic
degradation, ADAM training, PSNR/SSIM/SAM evaluation, and a CLI for the
model-analysis experiments (ablation, parameter counting, gradient checks).
"""

__version__ = "0.1.0"

from .autograd import (
    Conv3dParams,
    Tape,
    Tensor5,
    add,
    concat_channels,
    conv3d,
    conv3d_transposed,
    relu,
    scalar,
    tsum,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .data import (
    HsiCube,
    PatchSet,
    augment,
    bicubic_resize,
    compute_mean,
    extract_patches,
    mean_subtract,
    read_hsc,
    synth_cube,
    write_hsc,
)
from .errors import (
    ConfigError,
    ContractError,
    DimensionError,
    FormatError,
    GeometryError,
    MetricError,
    Ssr3dError,
    TrainingError,
)
from .losses import combo_loss, l1_loss, mse_loss
from .metrics import MetricsReport, metrics_report, psnr, sam, ssim
from .model import (
    Ssrnet,
    SsrnetConfig,
    block_forward,
    build,
    count_params,
    plan_layers,
    unit_forward,
)
from .trainer import (
    AdamOptimizer,
    TrainConfig,
    evaluate,
    lr_at,
    super_resolve,
    train,
)

__all__ = [
    "__version__",
    # tensor engine
    "Conv3dParams", "Tape", "Tensor5", "add", "concat_channels", "conv3d",
    "conv3d_transposed", "relu", "scalar", "tsum",
    # model
    "Ssrnet", "SsrnetConfig", "block_forward", "build", "count_params",
    "plan_layers", "unit_forward", "load_checkpoint", "save_checkpoint",
    # data
    "HsiCube", "PatchSet", "augment", "bicubic_resize", "compute_mean",
    "extract_patches", "mean_subtract", "read_hsc", "synth_cube", "write_hsc",
    # losses and metrics
    "combo_loss", "l1_loss", "mse_loss",
    "MetricsReport", "metrics_report", "psnr", "sam", "ssim",
    # training
    "AdamOptimizer", "TrainConfig", "evaluate", "lr_at", "super_resolve", "train",
    # errors
    "ConfigError", "ContractError", "DimensionError", "FormatError",
    "GeometryError", "MetricError", "Ssr3dError", "TrainingError",
]
