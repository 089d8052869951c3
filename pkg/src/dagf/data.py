"""Dataset pairing, normalization, augmentation and synthetic degradations.

Real display measurements are not available at desk scale, so an
analytic forward model (`synth_degrade`) stands in for them: blur, stripe
modulation, gain, color mixing and noise, applied in intensity space.
All randomness is seeded; the same seed always produces the same bytes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .imageio import load_image
from .tensor import Tensor

IMAGE_SUFFIXES = (".png", ".ppm", ".pnm")


def normalize(t):
    """Map [0, 1] data to [-1, 1] via 2t - 1 (shape preserved)."""
    if isinstance(t, Tensor):
        return Tensor(2.0 * t.data - 1.0)
    return 2.0 * np.asarray(t) - 1.0


def denormalize(t):
    """Inverse of `normalize`: (t + 1) / 2."""
    if isinstance(t, Tensor):
        return Tensor((t.data + 1.0) / 2.0)
    return (np.asarray(t) + 1.0) / 2.0


@dataclass
class ImagePair:
    """A degraded/clean image pair in [-1, 1], (3, H, W) each."""

    degraded: Tensor
    clean: Tensor
    id: str


def augment(pair: ImagePair, seed) -> ImagePair:
    """Seeded flips and 180-degree rotation, identical for both images.

    Each of the three transforms is drawn independently with p=0.5.
    """
    rng = np.random.default_rng(seed)
    do_h, do_v, do_r = rng.random(3) < 0.5

    def apply(arr):
        if do_h:
            arr = arr[..., ::-1]
        if do_v:
            arr = arr[..., ::-1, :]
        if do_r:
            arr = arr[..., ::-1, ::-1]
        return np.ascontiguousarray(arr)

    return ImagePair(
        degraded=Tensor(apply(pair.degraded.data)),
        clean=Tensor(apply(pair.clean.data)),
        id=pair.id,
    )


def random_crop(pair: ImagePair, size: tuple[int, int], rng) -> ImagePair:
    """Aligned random crop of both images (for memory-limited training)."""
    ch, cw = size
    _, h, w = pair.clean.shape
    if ch > h or cw > w:
        raise DataError(f"crop {ch}x{cw} larger than image {h}x{w}")
    y = int(rng.integers(0, h - ch + 1))
    x = int(rng.integers(0, w - cw + 1))
    return ImagePair(
        degraded=Tensor(np.ascontiguousarray(pair.degraded.data[:, y : y + ch, x : x + cw])),
        clean=Tensor(np.ascontiguousarray(pair.clean.data[:, y : y + ch, x : x + cw])),
        id=pair.id,
    )


# -- synthetic degradations -----------------------------------------------------


def _identity_matrix():
    return ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))


@dataclass
class DegradeProfile:
    kind: str = "toled_like"  # or "poled_like"
    blur_sigma: float = 0.0
    stripe_period: int = 4
    stripe_depth: float = 0.0
    gain: float = 1.0
    noise_sigma: float = 0.0
    color_matrix: tuple = field(default_factory=_identity_matrix)

    def validate(self):
        if self.kind not in ("toled_like", "poled_like"):
            raise DataError(f"unknown degradation kind {self.kind!r}")
        if not (0.0 < self.gain <= 1.0):
            raise DataError(f"gain must lie in (0, 1], got {self.gain}")
        if self.blur_sigma < 0 or self.noise_sigma < 0:
            raise DataError("sigmas must be >= 0")
        return self


def toled_profile(blur_sigma=1.2, stripe_period=4, stripe_depth=0.15, noise_sigma=0.01):
    """Blur plus stripe banding: the transparent-layout failure mode."""
    return DegradeProfile(
        kind="toled_like",
        blur_sigma=blur_sigma,
        stripe_period=stripe_period,
        stripe_depth=stripe_depth,
        noise_sigma=noise_sigma,
    )


def poled_profile(gain=0.35, blur_sigma=1.5, noise_sigma=0.03):
    """Low light with color crosstalk: the pentile-layout failure mode."""
    mix = (
        (0.85, 0.10, 0.05),
        (0.08, 0.84, 0.08),
        (0.05, 0.12, 0.83),
    )
    return DegradeProfile(
        kind="poled_like",
        gain=gain,
        blur_sigma=blur_sigma,
        noise_sigma=noise_sigma,
        color_matrix=mix,
    )


def _gaussian_blur(img, sigma):
    radius = max(1, int(np.ceil(3.0 * sigma)))
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(ax * ax) / (2.0 * sigma * sigma))
    k /= k.sum()
    padded = np.pad(img, ((0, 0), (radius, radius), (0, 0)), mode="reflect")
    out = np.zeros_like(img)
    for i, kv in enumerate(k):
        out += kv * padded[:, i : i + img.shape[1], :]
    padded = np.pad(out, ((0, 0), (0, 0), (radius, radius)), mode="reflect")
    out = np.zeros_like(img)
    for i, kv in enumerate(k):
        out += kv * padded[:, :, i : i + img.shape[2]]
    return out


def synth_degrade(clean, profile: DegradeProfile, seed) -> Tensor:
    """Apply an analytic degradation to a [-1, 1] image, deterministically.

    Operates in intensity space ([0, 1]); an all-identity profile returns
    the input unchanged.  Output is clamped to [-1, 1].
    """
    profile.validate()
    arr = np.asarray(clean.data if isinstance(clean, Tensor) else clean, dtype=np.float32)
    active_blur = profile.blur_sigma > 0
    active_stripe = profile.stripe_depth > 0
    active_gain = profile.gain != 1.0
    active_mix = tuple(profile.color_matrix) != _identity_matrix()
    active_noise = profile.noise_sigma > 0
    if not any((active_blur, active_stripe, active_gain, active_mix, active_noise)):
        return Tensor(arr.copy())

    inten = (arr.astype(np.float64) + 1.0) / 2.0
    if profile.kind == "poled_like":
        if active_gain:
            inten = profile.gain * inten
        if active_mix:
            m = np.asarray(profile.color_matrix, dtype=np.float64)
            inten = np.einsum("oc,chw->ohw", m, inten)
        if active_blur:
            inten = _gaussian_blur(inten, profile.blur_sigma)
    else:
        if active_blur:
            inten = _gaussian_blur(inten, profile.blur_sigma)
        if active_stripe:
            cols = np.arange(inten.shape[2])
            wave = ((cols % profile.stripe_period) >= profile.stripe_period / 2).astype(np.float64)
            inten = inten * (1.0 - profile.stripe_depth * wave)[None, None, :]
    if active_noise:
        rng = np.random.default_rng(seed)
        inten = inten + rng.normal(scale=profile.noise_sigma, size=inten.shape)
    out = np.clip(2.0 * inten - 1.0, -1.0, 1.0)
    return Tensor(out.astype(np.float32))


# -- paired directory dataset ------------------------------------------------------


def _stem_index(directory: Path) -> dict[str, Path]:
    files = {}
    for p in sorted(directory.iterdir()):
        if p.suffix.lower() in IMAGE_SUFFIXES:
            files[p.stem] = p
    return files


def load_pairs(root) -> list[ImagePair]:
    """Load `<root>/degraded/*` and `<root>/clean/*` paired by filename stem.

    Images come back normalized to [-1, 1], sorted by stem.
    """
    root = Path(root)
    deg_dir = root / "degraded"
    clean_dir = root / "clean"
    for d in (deg_dir, clean_dir):
        if not d.is_dir():
            raise DataError(f"dataset directory missing: {d}")
    deg = _stem_index(deg_dir)
    clean = _stem_index(clean_dir)
    if not deg or not clean:
        raise DataError(f"dataset at {root} is empty")
    missing = sorted(set(deg) ^ set(clean))
    if missing:
        raise DataError(f"unpaired stems in {root}: {missing[:8]}")
    pairs = []
    for stem in sorted(deg):
        pairs.append(
            ImagePair(
                degraded=normalize(load_image(deg[stem])),
                clean=normalize(load_image(clean[stem])),
                id=stem,
            )
        )
    return pairs
