"""Image restoration via a low-resolution atrous network and a trainable
guided-filter joint upsampler, on a self-contained reverse-mode tensor core."""

from .backend import active_backend
from .blocks import LRNet, LRNetConfig
from .guided import (
    DagfConfig,
    DagfNet,
    GuidedFilterConfig,
    GuidedFilterNet,
    classic_guided_filter,
    self_ensemble_infer,
)
from .losses import CobiConfig, cobi_loss, l1_loss, psnr, ssim
from .optim import AdamW, OptimHyper, lr_at
from .tensor import Parameter, Tensor, no_grad

__all__ = [
    "Tensor",
    "Parameter",
    "no_grad",
    "active_backend",
    "LRNet",
    "LRNetConfig",
    "DagfNet",
    "DagfConfig",
    "GuidedFilterNet",
    "GuidedFilterConfig",
    "classic_guided_filter",
    "self_ensemble_infer",
    "l1_loss",
    "cobi_loss",
    "CobiConfig",
    "psnr",
    "ssim",
    "AdamW",
    "OptimHyper",
    "lr_at",
]

__version__ = "0.1.0"
