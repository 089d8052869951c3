"""Training objectives and evaluation metrics.

The contextual bilateral loss is evaluated by exhaustive nearest-match
search over all pixel pairs (optionally windowed), exactly as defined:
no distance normalization is applied.  Pixel vectors are shifted by
`shift` before the cosine distance so [-1,1]-normalized data lands in a
nonnegative range where cosine similarity is meaningful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ops as O
from .errors import DimensionError
from .tensor import Tensor, record

_COS_EPS = 1e-8


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean absolute error over all elements."""
    return O.mean_all(O.absolute(O.sub(pred, target)))


@dataclass
class CobiConfig:
    gamma: float = 0.5
    distance: str = "cosine"
    shift: float = 1.0  # added to both images before the cosine distance
    search_radius: int | None = None  # None = exhaustive search

    def validate(self):
        if self.gamma < 0:
            raise DimensionError(f"gamma must be >= 0, got {self.gamma}")
        if self.distance != "cosine":
            raise DimensionError(f"unsupported distance {self.distance!r}")
        return self


def _ssq3(v):
    """Sum of squares per RGB vector, in the documented expression order."""
    return v[:, 0] * v[:, 0] + v[:, 1] * v[:, 1] + v[:, 2] * v[:, 2]


def _guard(den):
    """Stabilize near-zero norm products without touching healthy ones.

    The epsilon is added only below the threshold so that regular pixels
    keep an exact denominator (the self-match distance must be exactly
    zero).
    """
    return np.where(den < _COS_EPS, den + _COS_EPS, den)


def _cos_distance(dot, ssq_p, ssq_q):
    """1 - dot/sqrt(|p|^2 |q|^2), clamped at the true lower bound 0.

    sqrt of the product (rather than a product of sqrts) keeps the
    self-match ratio exactly 1; the clamp removes one-ulp negatives from
    nearly parallel pairs.
    """
    den = _guard(np.sqrt(ssq_p * ssq_q))
    return np.maximum(1.0 - dot / den, 0.0)


def _min_match_exhaustive(p, q, h, w, gamma):
    """Per-pixel minimum and argmin over every target pixel."""
    hw = h * w
    dot = (
        p[:, 0][:, None] * q[:, 0][None, :]
        + p[:, 1][:, None] * q[:, 1][None, :]
        + p[:, 2][:, None] * q[:, 2][None, :]
    )
    cos_d = _cos_distance(dot, _ssq3(p)[:, None], _ssq3(q)[None, :])
    ii, jj = np.divmod(np.arange(hw), w)
    di = ii[:, None] - ii[None, :]
    dj = jj[:, None] - jj[None, :]
    spatial = (di * di + dj * dj).astype(np.float64)
    total = cos_d + np.float64(gamma) * spatial
    best = np.argmin(total, axis=1)
    mins = total[np.arange(hw), best]
    return mins, best


def _min_match_windowed(p, q, h, w, gamma, radius):
    """Minimum over target pixels within an index window of each pixel."""
    hw = h * w
    offs = np.arange(-radius, radius + 1)
    dy = np.repeat(offs, offs.size)
    dx = np.tile(offs, offs.size)
    ii, jj = np.divmod(np.arange(hw), w)
    ki = ii[:, None] + dy[None, :]
    kj = jj[:, None] + dx[None, :]
    valid = (ki >= 0) & (ki < h) & (kj >= 0) & (kj < w)
    kidx = np.where(valid, ki * w + kj, 0)
    qg = q[kidx]  # (HW, K, 3)
    dot = (
        p[:, 0][:, None] * qg[..., 0]
        + p[:, 1][:, None] * qg[..., 1]
        + p[:, 2][:, None] * qg[..., 2]
    )
    cos_d = _cos_distance(dot, _ssq3(p)[:, None], _ssq3(q)[kidx])
    spatial = (dy * dy + dx * dx).astype(np.float64)
    total = cos_d + np.float64(gamma) * spatial[None, :]
    total = np.where(valid, total, np.inf)
    pick = np.argmin(total, axis=1)
    rows = np.arange(hw)
    return total[rows, pick], kidx[rows, pick]


def _cobi_single(p64, q64, h, w, gamma, radius):
    hw = h * w
    p = np.ascontiguousarray(p64.reshape(3, hw).T)  # (HW, 3)
    q = np.ascontiguousarray(q64.reshape(3, hw).T)
    if radius is None:
        mins, best = _min_match_exhaustive(p, q, h, w, gamma)
    else:
        mins, best = _min_match_windowed(p, q, h, w, gamma, radius)
    loss = np.mean(mins.reshape(h, w))
    return loss, best, p, q


def cobi_loss(pred: Tensor, target: Tensor, cfg: CobiConfig | None = None) -> Tensor:
    """Contextual bilateral loss between RGB images.

    For every pixel of `pred` the closest `target` pixel is found under
    cosine distance plus gamma-weighted squared index offset; the loss is
    the mean of those minima.  Accepts (3,H,W) or (N,3,H,W) tensors (the
    batched form averages per-image losses).  Gradients flow into each
    pred pixel and its selected target pixel.
    """
    cfg = (cfg or CobiConfig()).validate()
    if pred.shape != target.shape:
        raise DimensionError(
            f"cobi_loss: shapes {tuple(pred.shape)} vs {tuple(target.shape)} differ"
        )
    if pred.ndim == 3:
        shape_nchw = (1,) + tuple(pred.shape)
    elif pred.ndim == 4:
        shape_nchw = tuple(pred.shape)
    else:
        raise DimensionError(f"cobi_loss: expected CHW or NCHW, got rank {pred.ndim}")
    n, c, h, w = shape_nchw
    if c != 3:
        raise DimensionError(f"cobi_loss: expected 3 channels, got {c} (axis -3)")
    if h * w == 0:
        raise DimensionError("cobi_loss: empty image")

    p_all = pred.data.reshape(shape_nchw).astype(np.float64) + np.float64(cfg.shift)
    q_all = target.data.reshape(shape_nchw).astype(np.float64) + np.float64(cfg.shift)

    per_image = []
    saved = []
    for b in range(n):
        loss, best, p, q = _cobi_single(p_all[b], q_all[b], h, w, cfg.gamma, cfg.search_radius)
        per_image.append(loss)
        saved.append((best, p, q))
    value = np.mean(np.asarray(per_image))
    out = Tensor(np.asarray(value, dtype=pred.dtype))

    hw = h * w
    coeff = 1.0 / (hw * n)

    def back(g):
        gs = float(np.asarray(g).reshape(-1)[0]) * coeff
        gp_all = np.zeros((n, hw, 3), dtype=np.float64)
        gq_all = np.zeros((n, hw, 3), dtype=np.float64)
        for b, (best, p, q) in enumerate(saved):
            qs = q[best]  # selected target pixel per pred pixel
            ssq_p = _ssq3(p)
            ssq_q = _ssq3(qs)
            dot_sel = np.sum(p * qs, axis=1)
            den = _guard(np.sqrt(ssq_p * ssq_q))
            # d(1 - dot/den)/dp with den = sqrt(|p|^2 |q|^2); zero where the
            # distance sits on its clamp at 0 (subgradient choice).
            active = (1.0 - dot_sel / den) > 0.0
            den3 = den * den * den
            gp = -qs / den[:, None] + (dot_sel * ssq_q / den3)[:, None] * p
            gq_rows = -p / den[:, None] + (dot_sel * ssq_p / den3)[:, None] * qs
            gp = np.where(active[:, None], gp, 0.0) * gs
            gq_rows = np.where(active[:, None], gq_rows, 0.0) * gs
            gp_all[b] = gp
            np.add.at(gq_all[b], best, gq_rows)
        gp_out = gp_all.transpose(0, 2, 1).reshape((n, 3, h, w))
        gq_out = gq_all.transpose(0, 2, 1).reshape((n, 3, h, w))
        if pred.ndim == 3:
            gp_out, gq_out = gp_out[0], gq_out[0]
        return (gp_out, gq_out)

    return record(out, (pred, target), back)


def psnr(pred, target, peak: float = 2.0) -> float:
    """Peak signal-to-noise ratio in dB; +inf when the images are identical."""
    a = np.asarray(pred.data if isinstance(pred, Tensor) else pred, dtype=np.float64)
    b = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"psnr: shapes {a.shape} vs {b.shape} differ")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax * ax) / (2.0 * sigma * sigma))
    win = np.outer(g, g)
    return win / win.sum()


def ssim(pred, target, data_range: float = 2.0, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean local structural similarity with an 11x11 Gaussian window.

    Multi-channel inputs are converted to grayscale by channel mean.
    Images smaller than the window fall back to global statistics.
    """
    a = np.asarray(pred.data if isinstance(pred, Tensor) else pred, dtype=np.float64)
    b = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"ssim: shapes {a.shape} vs {b.shape} differ")
    if a.ndim == 3:
        a = a.mean(axis=0)
        b = b.mean(axis=0)
    if a.ndim != 2:
        raise DimensionError(f"ssim: expected HW or CHW images, got rank {a.ndim}")
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    win = _gaussian_window()
    n = win.shape[0]
    h, w = a.shape
    if h < n or w < n:
        mu_a, mu_b = a.mean(), b.mean()
        var_a, var_b = a.var(), b.var()
        cov = ((a - mu_a) * (b - mu_b)).mean()
        num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
        den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
        return float(num / den)
    wa = np.lib.stride_tricks.sliding_window_view(a, (n, n))
    wb = np.lib.stride_tricks.sliding_window_view(b, (n, n))
    mu_a = np.tensordot(wa, win, axes=([2, 3], [0, 1]))
    mu_b = np.tensordot(wb, win, axes=([2, 3], [0, 1]))
    m_aa = np.tensordot(wa * wa, win, axes=([2, 3], [0, 1]))
    m_bb = np.tensordot(wb * wb, win, axes=([2, 3], [0, 1]))
    m_ab = np.tensordot(wa * wb, win, axes=([2, 3], [0, 1]))
    var_a = m_aa - mu_a * mu_a
    var_b = m_bb - mu_b * mu_b
    cov = m_ab - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))
