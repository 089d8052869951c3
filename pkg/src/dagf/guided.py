"""Trainable guided filter, the full two-stage restoration pipeline, and
geometric self-ensembling.

The filter expresses the high-resolution output as a local affine map of
a transformed guide: coefficients are estimated at low resolution from
windowed covariance statistics (learned 3x3 mean filter), solved by a
three-layer 1x1 network instead of a closed form, bilinearly upsampled,
and applied to the transformed high-resolution guide.  A classic
closed-form guided filter is included as a verification oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops as O
from .blocks import AtrousResidualBlock, AdaptiveNorm, Conv2d, LRNet, LRNetConfig
from .errors import ConfigError, DimensionError
from .module import Module
from .tensor import Parameter, Tensor, no_grad


class IdentityTransform(Module):
    def forward(self, x):
        return x


class DepthwiseConv(Module):
    """Per-channel convolution (no cross-channel mixing), zero padded.

    Initialized to the normalized box so the untrained filter computes
    plain windowed means.
    """

    def __init__(self, channels, ksize=3):
        super().__init__()
        box = np.full((channels, 1, ksize, ksize), 1.0 / (ksize * ksize), np.float32)
        self.kernel = Parameter(box)
        self.channels = channels
        self.pad = (ksize - 1) // 2

    def forward(self, x):
        if x.shape[1] != self.channels:
            raise DimensionError(
                f"depthwise conv built for {self.channels} channels, got {x.shape[1]} (axis 1)"
            )
        outs = []
        for c in range(self.channels):
            xc = O.narrow(x, 1, c, 1)
            kc = O.narrow(self.kernel, 0, c, 1)
            outs.append(O.conv2d(xc, kc, padding=self.pad))
        return O.concat(outs, axis=1)


class LocalAffineSolver(Module):
    """Three 1x1 conv layers mapping covariance statistics to coefficients.

    Channel plan (3+3) -> mid -> mid -> 3 with adaptive norm + ReLU after
    the first two layers only.  The last layer starts at zero so the
    affine term is initially off and the filter output begins as a
    smoothed upsample of the low-resolution result.
    """

    def __init__(self, channels, mid, rng):
        super().__init__()
        self.conv1 = Conv2d(2 * channels, mid, 1, rng)
        self.norm1 = AdaptiveNorm()
        self.conv2 = Conv2d(mid, mid, 1, rng)
        self.norm2 = AdaptiveNorm()
        self.conv3 = Conv2d(mid, channels, 1, rng, zero_init=True)

    def forward(self, s):
        s = O.relu(self.norm1(self.conv1(s)))
        s = O.relu(self.norm2(self.conv2(s)))
        return self.conv3(s)


class ClosedFormCoefficients(Module):
    """Closed-form replacement for the learned solver: A = cov/(var+eps).

    Verification mode only; the output is a constant (no gradient flows
    through it).
    """

    def __init__(self, eps=1e-4):
        super().__init__()
        self.eps = eps

    def forward(self, s):
        c = s.shape[1] // 2
        var = s.data[:, :c].astype(np.float64)
        cov = s.data[:, c:].astype(np.float64)
        return Tensor((cov / (var + self.eps)).astype(s.dtype))


@dataclass
class GuidedFilterConfig:
    transform: str = "atrous_block"  # atrous_block | conv1x1 | conv3x3 | identity
    transform_dilations: tuple = (1, 2, 4, 8)
    local_channels: int = 32
    separate_y_mu: bool = False

    def validate(self):
        if self.transform not in ("atrous_block", "conv1x1", "conv3x3", "identity"):
            raise ConfigError(f"unknown guide transform {self.transform!r}")
        if self.local_channels < 1:
            raise ConfigError("local_channels must be >= 1")
        return self


def _build_transform(cfg: GuidedFilterConfig, channels, rng):
    if cfg.transform == "identity":
        return IdentityTransform()
    if cfg.transform == "conv1x1":
        return Conv2d(channels, channels, 1, rng)
    if cfg.transform == "conv3x3":
        return Conv2d(channels, channels, 3, rng, padding=1)
    return AtrousResidualBlock(
        channels,
        list(cfg.transform_dilations),
        rng,
        branch_channels=max(1, channels // 2),
        attn_bottleneck=max(1, channels // 8),
    )


class GuidedFilterNet(Module):
    """Joint upsampler: learns the mean filter, guide transform and the
    local affine solver, trained end to end with the restoration net."""

    def __init__(self, rng, cfg: GuidedFilterConfig | None = None, channels=3,
                 transform_module=None, local_module=None):
        super().__init__()
        cfg = (cfg or GuidedFilterConfig()).validate()
        self.cfg = cfg
        self.channels = channels
        self.transform = transform_module if transform_module is not None else _build_transform(cfg, channels, rng)
        self.mu = DepthwiseConv(channels, 3)
        if cfg.separate_y_mu:
            self.mu_y = DepthwiseConv(channels, 3)
        else:
            self.mu_y = None
        self.local = local_module if local_module is not None else LocalAffineSolver(
            channels, cfg.local_channels, rng
        )

    def coefficients(self, x_l, y_l):
        """Low-resolution affine coefficients (A_l, b_l)."""
        g_l = self.transform(x_l)
        mu_y = self.mu_y if self.mu_y is not None else self.mu
        mean_g = self.mu(g_l)
        mean_y = mu_y(y_l)
        mean_gg = self.mu(O.mul(g_l, g_l))
        mean_gy = mu_y(O.mul(g_l, y_l))
        var = O.sub(mean_gg, O.mul(mean_g, mean_g))
        cov = O.sub(mean_gy, O.mul(mean_g, mean_y))
        a_l = self.local(O.concat([var, cov], axis=1))
        b_l = O.sub(mean_y, O.mul(a_l, mean_g))
        return a_l, b_l

    def forward(self, x_h, x_l, y_l):
        if x_l.shape != y_l.shape:
            raise DimensionError(
                f"low-resolution input {tuple(x_l.shape)} and output "
                f"{tuple(y_l.shape)} must share a shape"
            )
        if x_h.shape[1] != x_l.shape[1]:
            raise DimensionError(
                f"guide channels {x_h.shape[1]} != low-resolution channels {x_l.shape[1]} (axis 1)"
            )
        a_l, b_l = self.coefficients(x_l, y_l)
        g_h = self.transform(x_h)
        h, w = x_h.shape[2], x_h.shape[3]
        a_h = O.bilinear_resize(a_l, h, w)
        b_h = O.bilinear_resize(b_l, h, w)
        return O.add(O.mul(a_h, g_h), b_h)


def guided_filter_forward(x_h, x_l, y_l, net: GuidedFilterNet):
    return net(x_h, x_l, y_l)


# -- classic closed-form filter (verification oracle) --------------------------


def _box_mean(img: np.ndarray, radius: int) -> np.ndarray:
    """Windowed mean with clipped windows, normalized by the valid count."""
    h, w = img.shape
    ii = np.zeros((h + 1, w + 1), dtype=np.float64)
    ii[1:, 1:] = np.cumsum(np.cumsum(img, axis=0), axis=1)
    y0 = np.clip(np.arange(h) - radius, 0, h)
    y1 = np.clip(np.arange(h) + radius + 1, 0, h)
    x0 = np.clip(np.arange(w) - radius, 0, w)
    x1 = np.clip(np.arange(w) + radius + 1, 0, w)
    total = (
        ii[y1[:, None], x1[None, :]]
        - ii[y0[:, None], x1[None, :]]
        - ii[y1[:, None], x0[None, :]]
        + ii[y0[:, None], x0[None, :]]
    )
    count = (y1 - y0)[:, None] * (x1 - x0)[None, :]
    return total / count


def classic_guided_filter(guide, target, radius: int, eps: float, return_coefficients=False):
    """He-style guided filter with clipped box windows, per channel.

    a = cov/(var+eps) and b = mean(Y) - a*mean(G) per window; the output
    averages the coefficients of every window covering a pixel before
    applying them.  Same-scale filtering only (no subsampling).
    """
    if radius < 1:
        raise ConfigError(f"radius must be >= 1, got {radius}")
    if eps <= 0:
        raise ConfigError(f"eps must be > 0, got {eps}")
    is_tensor = isinstance(guide, Tensor)
    g = np.asarray(guide.data if is_tensor else guide, dtype=np.float64)
    y = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    if g.shape != y.shape:
        raise DimensionError(f"guide {g.shape} and target {y.shape} shapes differ")
    flat_g = g.reshape((-1,) + g.shape[-2:])
    flat_y = y.reshape((-1,) + y.shape[-2:])
    outs, a_all, b_all = [], [], []
    for gs, ys in zip(flat_g, flat_y):
        mg = _box_mean(gs, radius)
        my = _box_mean(ys, radius)
        var = _box_mean(gs * gs, radius) - mg * mg
        cov = _box_mean(gs * ys, radius) - mg * my
        a = cov / (var + eps)
        b = my - a * mg
        outs.append(_box_mean(a, radius) * gs + _box_mean(b, radius))
        a_all.append(a)
        b_all.append(b)
    out = np.stack(outs).reshape(g.shape)
    if return_coefficients:
        return out, np.stack(a_all).reshape(g.shape), np.stack(b_all).reshape(g.shape)
    if is_tensor:
        return Tensor(out.astype(guide.dtype))
    return out


# -- end-to-end pipeline --------------------------------------------------------


@dataclass
class DagfConfig:
    lrnet: LRNetConfig = field(default_factory=LRNetConfig)
    gf: GuidedFilterConfig = field(default_factory=GuidedFilterConfig)
    downsample_factor: int = 4
    ensemble: bool = False

    def validate(self):
        if self.downsample_factor < 1:
            raise ConfigError(
                f"downsample_factor must be >= 1, got {self.downsample_factor}"
            )
        self.lrnet.validate()
        self.gf.validate()
        return self


class DagfNet(Module):
    """Restore at low resolution, then joint-upsample with the guided filter."""

    def __init__(self, cfg: DagfConfig, rng: np.random.Generator):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.lrnet = LRNet(cfg.lrnet, rng)
        self.gf = GuidedFilterNet(rng, cfg.gf, channels=cfg.lrnet.out_channels)
        self.bind_names("dagf")

    def forward(self, x_h):
        f = self.cfg.downsample_factor
        s = self.cfg.lrnet.shuffle_factor
        n, c, h, w = x_h.shape
        if h % (f * s) != 0 or w % (f * s) != 0:
            raise DimensionError(
                f"input {h}x{w} must divide by downsample*shuffle = {f * s} (axes 2, 3)"
            )
        x_l = O.bilinear_resize(x_h, h // f, w // f) if f > 1 else x_h
        y_l = self.lrnet(x_l)
        return self.gf(x_h, x_l, y_l)

    def infer(self, x_h: Tensor) -> Tensor:
        """Forward pass without graph recording, clamped to [-1, 1]."""
        with no_grad():
            y = self.forward(x_h)
        return Tensor(np.clip(y.data, -1.0, 1.0))


# -- geometric self-ensembling ---------------------------------------------------

# The eight dihedral transforms as (forward, inverse) pairs on NCHW arrays.
_TRANSFORMS = [
    (lambda a: a, lambda a: a),
    (lambda a: a[..., ::-1], lambda a: a[..., ::-1]),
    (lambda a: a[..., ::-1, :], lambda a: a[..., ::-1, :]),
    (lambda a: a[..., ::-1, ::-1], lambda a: a[..., ::-1, ::-1]),
    (lambda a: a.swapaxes(-1, -2), lambda a: a.swapaxes(-1, -2)),
    (lambda a: a.swapaxes(-1, -2)[..., ::-1],
     lambda a: a[..., ::-1].swapaxes(-1, -2)),
    (lambda a: a.swapaxes(-1, -2)[..., ::-1, :],
     lambda a: a[..., ::-1, :].swapaxes(-1, -2)),
    (lambda a: a.swapaxes(-1, -2)[..., ::-1, ::-1],
     lambda a: a[..., ::-1, ::-1].swapaxes(-1, -2)),
]


def self_ensemble_infer(x_h: Tensor, model) -> Tensor:
    """Average the model over the eight dihedral input transforms.

    Each flipped/rotated copy of the input is pushed through the model
    and inverse-transformed before the (float64) average.  The 90-degree
    family is realized by transposing the spatial extents, so non-square
    inputs work whenever both extents satisfy the model's divisibility
    rule.
    """
    src = x_h.data
    acc = None
    with no_grad():
        for fwd, inv in _TRANSFORMS:
            t_in = Tensor(np.ascontiguousarray(fwd(src)))
            out = model(t_in)
            restored = inv(out.data).astype(np.float64)
            acc = restored.copy() if acc is None else acc + restored
    return Tensor((acc / len(_TRANSFORMS)).astype(src.dtype))
