"""Measurement simulator: a shallow restoration net trained with the
contextual bilateral loss to map clean images toward measurement style.

Clean/measured pairs need not be aligned; the loss tolerates offsets.
The trained simulator generates degraded/clean training pairs for
pre-training the full pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .blocks import LRNet, LRNetConfig
from .errors import DataError
from .losses import CobiConfig, cobi_loss
from .optim import AdamW, OptimHyper
from .tensor import Tensor


def shallow_config(channels: int = 16) -> LRNetConfig:
    """Reduced-depth variant used for simulation: 1 group, 2 blocks."""
    return LRNetConfig(num_groups=1, blocks_per_group=2, channels=channels)


@dataclass
class SimulateResult:
    model: LRNet
    losses: list = field(default_factory=list)


def simulate_train(
    clean_images,
    measured_images,
    shallow_cfg: LRNetConfig | None = None,
    steps: int = 200,
    lr: float = 3e-4,
    cobi: CobiConfig | None = None,
    seed: int = 0,
) -> SimulateResult:
    """Fit the shallow simulator on (unaligned) clean/measured image lists.

    Images are (3, H, W) tensors in [-1, 1], matched by index; every image
    pair must share a shape.  Deterministic for a fixed seed.
    """
    clean_images = list(clean_images)
    measured_images = list(measured_images)
    if not clean_images or len(clean_images) != len(measured_images):
        raise DataError(
            f"need equal nonempty image lists, got {len(clean_images)} clean "
            f"and {len(measured_images)} measured"
        )
    cfg = shallow_cfg or shallow_config()
    cobi = cobi or CobiConfig(gamma=0.5, search_radius=8)
    rng = np.random.default_rng([seed, 0x51D])
    model = LRNet(cfg, rng).bind_names("sim")
    params = model.parameters()
    opt = AdamW(params, OptimHyper(eta0=lr))

    losses = []
    n = len(clean_images)
    for step in range(steps):
        idx = step % n
        x = Tensor(clean_images[idx].data[None])
        target = Tensor(measured_images[idx].data[None])
        pred = model(x)
        loss = cobi_loss(pred, target, cobi)
        model.zero_grad()
        loss.backward()
        opt.step(lr)
        losses.append(loss.item())
    return SimulateResult(model=model, losses=losses)


def generate_pairs(model: LRNet, clean_images) -> list[Tensor]:
    """Run the trained simulator over clean images (clamped to [-1, 1])."""
    from .tensor import no_grad

    out = []
    with no_grad():
        for img in clean_images:
            pred = model(Tensor(img.data[None]))
            out.append(Tensor(np.clip(pred.data[0], -1.0, 1.0)))
    return out
