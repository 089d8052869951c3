"""Training loop: seeded, resumable, single coordinator thread.

Batch order, augmentation and crops derive their randomness statelessly
from (seed, epoch, index), so a run interrupted at an epoch boundary and
resumed from its checkpoint continues bit-identically.  Checkpoints are
written at every annealing-cycle boundary and at the end of the run; a
CSV line `epoch,lr,train_l1,val_psnr,val_ssim` is appended per epoch.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .checkpoint import load_bundle, save_bundle
from .config import RunConfig, config_to_meta
from .data import ImagePair, augment, random_crop
from .errors import DataError
from .guided import DagfNet
from .losses import l1_loss, psnr, ssim
from .optim import AdamW, clip_grad_norm, cycle_boundaries, lr_at
from .tensor import Tensor


def _format_float(x: float) -> str:
    if math.isinf(x):
        return "inf"
    return format(x, ".8g")


def batch_tensor(pairs: list[ImagePair]):
    degraded = np.stack([p.degraded.data for p in pairs])
    clean = np.stack([p.clean.data for p in pairs])
    return Tensor(degraded), Tensor(clean)


def evaluate_pairs(model: DagfNet, pairs: list[ImagePair]):
    """Mean restored-image PSNR/SSIM over pairs, in the [-1, 1] domain."""
    psnrs, ssims = [], []
    for pair in pairs:
        pred = model.infer(Tensor(pair.degraded.data[None]))
        psnrs.append(psnr(pred.data[0], pair.clean.data, peak=2.0))
        ssims.append(ssim(pred.data[0], pair.clean.data, data_range=2.0))
    mean_psnr = math.inf if any(math.isinf(v) for v in psnrs) else float(np.mean(psnrs))
    return mean_psnr, float(np.mean(ssims))


class Trainer:
    def __init__(self, cfg: RunConfig, out_dir, pairs, val_pairs=None):
        cfg.validate()
        if not pairs:
            raise DataError("training dataset is empty")
        self.cfg = cfg
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.pairs = list(pairs)
        self.val_pairs = list(val_pairs) if val_pairs else list(pairs)
        self.model = DagfNet(cfg.model, np.random.default_rng([cfg.seed, 0xD46F]))
        self.opt = AdamW(self.model.parameters(), cfg.optim)
        self.start_epoch = 0
        if cfg.pretrain_checkpoint:
            self.load_pretrained(cfg.pretrain_checkpoint)

    # -- checkpointing ---------------------------------------------------------

    def load_pretrained(self, path):
        """Initialize model weights from a checkpoint (fresh optimizer)."""
        bundle = load_bundle(path)
        params = {k: v for k, v in bundle.items() if not k.startswith(("state/", "meta/"))}
        self.model.load_state_dict(params)

    def save_checkpoint(self, path, epoch: int):
        bundle = dict(self.model.state_dict())
        bundle.update(self.opt.state_arrays())
        bundle["state/epoch"] = np.asarray([float(epoch)], dtype=np.float32)
        bundle["state/seed"] = np.asarray([float(self.cfg.seed)], dtype=np.float32)
        bundle.update(config_to_meta(self.cfg.model))
        save_bundle(path, bundle)

    def resume(self, path):
        bundle = load_bundle(path)
        params = {k: v for k, v in bundle.items() if not k.startswith(("state/", "meta/"))}
        self.model.load_state_dict(params)
        self.opt.load_state_arrays(bundle)
        self.start_epoch = int(round(float(bundle["state/epoch"].reshape(-1)[0])))

    # -- the loop ----------------------------------------------------------------

    def _epoch_batches(self, epoch: int):
        cfg = self.cfg
        order = np.random.default_rng([cfg.seed, 0x0BDE, epoch]).permutation(len(self.pairs))
        for start in range(0, len(order), cfg.batch_size):
            chunk = order[start : start + cfg.batch_size]
            batch = []
            for idx in chunk:
                pair = self.pairs[int(idx)]
                if cfg.augment:
                    pair = augment(pair, [cfg.seed, 0xA46, epoch, int(idx)])
                if cfg.patch_size is not None:
                    rng = np.random.default_rng([cfg.seed, 0xC807, epoch, int(idx)])
                    pair = random_crop(pair, cfg.patch_size, rng)
                batch.append(pair)
            yield batch

    def train(self, stop_fn=None, log=print):
        cfg = self.cfg
        csv_path = self.out_dir / "metrics.csv"
        boundaries = set(cycle_boundaries(cfg.epochs, cfg.optim.cycle_epochs))
        steps_per_epoch = max(1, math.ceil(len(self.pairs) / cfg.batch_size))
        history = []
        final_epoch = self.start_epoch
        for epoch in range(self.start_epoch, cfg.epochs):
            epoch_lr = lr_at(float(epoch), cfg.optim)
            loss_sum = 0.0
            n_batches = 0
            for step, batch in enumerate(self._epoch_batches(epoch)):
                x, target = batch_tensor(batch)
                pred = self.model(x)
                loss = l1_loss(pred, target)
                self.model.zero_grad()
                loss.backward()
                if cfg.optim.clip_norm is not None:
                    clip_grad_norm(self.model.parameters(), cfg.optim.clip_norm)
                self.opt.step(lr_at(epoch + step / steps_per_epoch, cfg.optim))
                loss_sum += loss.item()
                n_batches += 1
            train_l1 = loss_sum / n_batches
            val_psnr, val_ssim = evaluate_pairs(self.model, self.val_pairs)
            row = (
                f"{epoch},{_format_float(epoch_lr)},{_format_float(train_l1)},"
                f"{_format_float(val_psnr)},{_format_float(val_ssim)}"
            )
            with csv_path.open("a") as fh:
                fh.write(row + "\n")
            if log:
                log(row)
            history.append(
                {"epoch": epoch, "lr": epoch_lr, "train_l1": train_l1,
                 "val_psnr": val_psnr, "val_ssim": val_ssim}
            )
            final_epoch = epoch + 1
            if final_epoch in boundaries:
                self.save_checkpoint(
                    self.out_dir / f"checkpoint_epoch{final_epoch:05d}.dagf", final_epoch
                )
            if stop_fn is not None and stop_fn(history[-1]):
                break
        final_path = self.out_dir / "checkpoint_final.dagf"
        self.save_checkpoint(final_path, final_epoch)
        return {"history": history, "checkpoint": final_path, "csv": csv_path}
