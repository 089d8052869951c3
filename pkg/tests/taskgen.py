"""Synthetic desk-scale restoration tasks shared by CLI and acceptance tests."""

import numpy as np

from dagf import Tensor
from dagf.data import ImagePair, synth_degrade, toled_profile


def smooth_random_image(rng, h, w):
    """Low-frequency random image in [0,1] (8x8 constant blocks)."""
    coarse = rng.uniform(0.15, 0.85, size=(3, max(2, h // 8), max(2, w // 8)))
    up = np.repeat(np.repeat(coarse, 8, axis=1), 8, axis=2)[:, :h, :w]
    return Tensor(up.astype(np.float32))


def make_toled_pairs(n, h, w, profile, seed):
    """n degraded/clean pairs in [-1,1] from seeded smooth images."""
    rng = np.random.default_rng([seed, 0x7A5C])
    pairs = []
    for i in range(n):
        clean01 = smooth_random_image(rng, h, w)
        clean = Tensor(2.0 * clean01.data - 1.0)
        degraded = synth_degrade(clean, profile, seed=[seed, i])
        pairs.append(ImagePair(degraded, clean, f"p{i}"))
    return pairs


def overfit_profile():
    """Mild blur + shallow stripes + light noise: restorable to 35 dB by
    the tiny pipeline within the acceptance step budget."""
    return toled_profile(blur_sigma=0.5, stripe_period=4, stripe_depth=0.03,
                         noise_sigma=0.003)


def transfer_profile():
    """Slightly harsher variant used for the pretraining direction check."""
    return toled_profile(blur_sigma=0.6, stripe_period=4, stripe_depth=0.04,
                         noise_sigma=0.004)
