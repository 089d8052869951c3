"""Low-resolution restoration network.

The network pixel-unshuffles its input, encodes it with groups of atrous
residual blocks (four parallel smoothed dilated convolutions per block,
each tailed by adaptive instance norm and a leaky rectifier, fused by a
1x1 convolution and gated by channel then pixel attention), aggregates
the per-group feature taps with learned masks, and projects back to
image space with a pixel shuffle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops as O
from .errors import ConfigError, DimensionError
from .module import Module
from .tensor import Parameter, Tensor

LRELU_SLOPE = 0.2
NORM_EPS = 1e-5


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = float(np.sqrt(6.0 / fan_in))
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


def dilations_for_group(k: int) -> list[int]:
    """Dilation rates of the four parallel branches in group k (1-indexed)."""
    if k < 1:
        raise ConfigError(f"group index must be >= 1, got {k}")
    return [2 ** (k - 1), 2**k, 2 ** (k + 1), 2 ** (k + 2)]


@dataclass
class LRNetConfig:
    num_groups: int = 3
    blocks_per_group: int = 4
    channels: int = 48
    shuffle_factor: int = 2
    in_channels: int = 3
    out_channels: int = 3
    attention_order: str = "channel_first"  # or "pixel_first"
    mask_channels: int = 1

    def validate(self):
        if self.num_groups < 1 or self.blocks_per_group < 1:
            raise ConfigError("num_groups and blocks_per_group must be >= 1")
        if self.channels % 2 != 0:
            raise ConfigError(f"channels must be even, got {self.channels}")
        if self.channels % 8 != 0:
            raise ConfigError(
                f"channels must be divisible by 8 for the attention bottleneck, "
                f"got {self.channels}"
            )
        if self.shuffle_factor < 1:
            raise ConfigError("shuffle_factor must be >= 1")
        if self.attention_order not in ("channel_first", "pixel_first"):
            raise ConfigError(f"unknown attention_order {self.attention_order!r}")
        return self


class Conv2d(Module):
    """Plain convolution layer with fixed stride/dilation/padding."""

    def __init__(self, in_ch, out_ch, ksize, rng, bias=True, stride=1, dilation=1,
                 padding=0, zero_init=False):
        super().__init__()
        shape = (out_ch, in_ch, ksize, ksize)
        fan_in = in_ch * ksize * ksize
        data = np.zeros(shape, np.float32) if zero_init else kaiming_uniform(rng, shape, fan_in)
        self.kernel = Parameter(data)
        self.bias = Parameter(np.zeros(out_ch, np.float32), decay=False) if bias else None
        self.stride = stride
        self.dilation = dilation
        self.padding = padding

    def forward(self, x):
        return O.conv2d(x, self.kernel, self.bias, self.stride, self.dilation, self.padding)


class AdaptiveNorm(Module):
    """Learned blend of identity and instance normalization.

    Output is lam * x + mu * N(x) where N standardizes each channel of
    each sample over its spatial extent.  Starts as the identity map
    (lam=1, mu=0).
    """

    def __init__(self, eps: float = NORM_EPS):
        super().__init__()
        self.lam = Parameter(np.ones(1, np.float32), decay=False)
        self.mu = Parameter(np.zeros(1, np.float32), decay=False)
        self.eps = eps

    def forward(self, x):
        return O.add(O.scale(x, self.lam), O.scale(O.instance_standardize(x, self.eps), self.mu))


class SmoothedAtrousConv(Module):
    """Dilated 3x3 convolution preceded by a shared separable smoother.

    Every input channel is first convolved with the same separable kernel
    of extent (2r-1), realized as a vertical then horizontal 1-D pass.  A
    per-output-channel scalar is added to the smoothed stack before the
    dilation-r convolution, so the bias participates in the dilated
    convolution's border behavior.  Spatial size is preserved: the
    smoothing stage pads r-1 and the dilated stage pads r.
    """

    def __init__(self, in_ch, out_ch, dilation, rng):
        super().__init__()
        r = int(dilation)
        if r < 1:
            raise ConfigError(f"dilation must be >= 1, got {r}")
        L = 2 * r - 1
        box = np.full(L, 1.0 / L, np.float32)
        self.sep_v = Parameter(box.reshape(1, 1, L, 1))
        self.sep_h = Parameter(box.reshape(1, 1, 1, L))
        self.pre_bias = Parameter(np.zeros(out_ch, np.float32), decay=False)
        self.kernel = Parameter(kaiming_uniform(rng, (out_ch, in_ch, 3, 3), in_ch * 9))
        self.dilation = r

    def smooth(self, x):
        r = self.dilation
        n, c, h, w = x.shape
        flat = O.reshape(x, (n * c, 1, h, w))
        s = O.conv2d(flat, self.sep_v, padding=(r - 1, 0))
        s = O.conv2d(s, self.sep_h, padding=(0, r - 1))
        return O.reshape(s, (n, c, h, w))

    def forward(self, x):
        r = self.dilation
        n, c, h, w = x.shape
        smoothed = self.smooth(x)
        main = O.conv2d(smoothed, self.kernel, dilation=r, padding=r)
        # conv of (smoothed + b_i) splits into conv(smoothed) + b_i * conv(ones):
        # exact by linearity, including the zero-padding border falloff.
        ones = Tensor.ones((1, c, h, w), dtype=x.dtype)
        field = O.conv2d(ones, self.kernel, dilation=r, padding=r)
        if n > 1:
            field = O.concat([field] * n, axis=0)
        return O.add(main, O.mul_cvec(field, self.pre_bias))


class ChannelAttention(Module):
    """Per-channel gates from global average pooling and two 1x1 convs."""

    def __init__(self, channels, bottleneck, rng):
        super().__init__()
        self.reduce = Conv2d(channels, bottleneck, 1, rng)
        self.expand = Conv2d(bottleneck, channels, 1, rng)

    def weights(self, x):
        a = self.reduce(O.global_avg_pool(x))
        a = O.lrelu(a, LRELU_SLOPE)
        return O.sigmoid(self.expand(a))

    def forward(self, x):
        return O.mul_channel(x, self.weights(x))


class PixelAttention(Module):
    """One attention map shared across channels, varying per pixel."""

    def __init__(self, channels, bottleneck, rng):
        super().__init__()
        self.reduce = Conv2d(channels, bottleneck, 1, rng)
        self.collapse = Conv2d(bottleneck, 1, 1, rng)

    def attention_map(self, x):
        a = O.lrelu(self.reduce(x), LRELU_SLOPE)
        return O.sigmoid(self.collapse(a))

    def forward(self, x):
        return O.mul_spatial(x, self.attention_map(x))


class AtrousResidualBlock(Module):
    """Residual block with four parallel smoothed atrous branches.

    branch_channels and attn_bottleneck default to C/2 and C/8; pass them
    explicitly for channel counts the defaults cannot divide (the guided
    filter's 3-channel transform does this).
    """

    def __init__(self, channels, dilations, rng, branch_channels=None,
                 attn_bottleneck=None, attention_order="channel_first"):
        super().__init__()
        if branch_channels is None:
            if channels % 2 != 0:
                raise ConfigError(f"channels must be even, got {channels}")
            branch_channels = channels // 2
        if attn_bottleneck is None:
            if channels % 8 != 0:
                raise ConfigError(f"channels must be divisible by 8, got {channels}")
            attn_bottleneck = channels // 8
        for i, r in enumerate(dilations):
            self.register(f"branch_d{r}", SmoothedAtrousConv(channels, branch_channels, r, rng))
            self.register(f"norm_d{r}", AdaptiveNorm())
        self.reduce = Conv2d(branch_channels * len(dilations), channels, 1, rng)
        self.channel_attn = ChannelAttention(channels, attn_bottleneck, rng)
        self.pixel_attn = PixelAttention(channels, attn_bottleneck, rng)
        self.dilations = list(dilations)
        self.attention_order = attention_order

    def forward(self, x):
        feats = []
        for r in self.dilations:
            branch = getattr(self, f"branch_d{r}")
            norm = getattr(self, f"norm_d{r}")
            feats.append(O.lrelu(norm(branch(x)), LRELU_SLOPE))
        y = self.reduce(O.concat(feats, axis=1))
        if self.attention_order == "channel_first":
            y = self.pixel_attn(self.channel_attn(y))
        else:
            y = self.channel_attn(self.pixel_attn(y))
        return O.add(x, y)


class GatedFusion(Module):
    """Learned masks weighting multi-depth feature maps before summation.

    A single 3x3 convolution maps the concatenated taps to one mask per
    tap (width `mask_channels`, broadcast across channels when 1); the
    output is the mask-weighted sum of the taps.
    """

    def __init__(self, channels, n_features, rng, mask_channels=1):
        super().__init__()
        if mask_channels not in (1, channels):
            raise ConfigError(
                f"mask_channels must be 1 or {channels}, got {mask_channels}"
            )
        self.conv = Conv2d(channels * n_features, n_features * mask_channels, 3, rng, padding=1)
        self.n_features = n_features
        self.mask_channels = mask_channels

    def forward(self, feats):
        if len(feats) != self.n_features:
            raise DimensionError(
                f"gated fusion expects {self.n_features} feature maps, got {len(feats)}"
            )
        masks = self.conv(O.concat(list(feats), axis=1))
        out = None
        mc = self.mask_channels
        for i, f in enumerate(feats):
            m = O.narrow(masks, 1, i * mc, mc)
            term = O.mul_spatial(f, m) if mc == 1 else O.mul(f, m)
            out = term if out is None else O.add(out, term)
        return out


class LRNet(Module):
    """Restores an image at low resolution; input H and W must divide by
    the shuffle factor and the output shape equals the input shape."""

    def __init__(self, cfg: LRNetConfig, rng: np.random.Generator):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        s = cfg.shuffle_factor
        c = cfg.channels
        self.stem = Conv2d(cfg.in_channels * s * s, c, 3, rng, padding=1)
        for k in range(1, cfg.num_groups + 1):
            group = Module()
            for b in range(cfg.blocks_per_group):
                group.register(
                    f"block{b}",
                    AtrousResidualBlock(
                        c, dilations_for_group(k), rng,
                        attention_order=cfg.attention_order,
                    ),
                )
            self.register(f"group{k}", group)
        self.fusion = GatedFusion(c, cfg.num_groups + 1, rng, cfg.mask_channels)
        self.head = Conv2d(c, cfg.out_channels * s * s, 3, rng, padding=1)

    def forward(self, x):
        s = self.cfg.shuffle_factor
        n, c, h, w = x.shape
        if h % s != 0 or w % s != 0:
            raise DimensionError(
                f"input {h}x{w} not divisible by shuffle factor {s} (axes 2, 3)"
            )
        z = O.pixel_unshuffle(x, s) if s > 1 else x
        taps = [self.stem(z)]
        for k in range(1, self.cfg.num_groups + 1):
            group = getattr(self, f"group{k}")
            cur = taps[-1]
            for b in range(self.cfg.blocks_per_group):
                cur = getattr(group, f"block{b}")(cur)
            taps.append(cur)
        fused = self.fusion(taps)
        out = self.head(fused)
        return O.pixel_shuffle(out, s) if s > 1 else out
