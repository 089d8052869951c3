"""Named finite-difference verification checks, grouped by scope.

`ops` probes each differentiable primitive, `blocks` each composite
block plus both losses, `e2e` the small end-to-end networks.  All shapes
are seeded and small; the full sweep is designed to finish in minutes on
one CPU core.  The CLI `gradcheck` command and the acceptance suite both
run these.
"""

from __future__ import annotations

import numpy as np

from . import ops as O
from .blocks import (
    AdaptiveNorm,
    AtrousResidualBlock,
    ChannelAttention,
    GatedFusion,
    LRNet,
    LRNetConfig,
    PixelAttention,
    SmoothedAtrousConv,
)
from .gradcheck import grad_check
from .guided import DagfConfig, DagfNet, GuidedFilterConfig, GuidedFilterNet
from .losses import CobiConfig, cobi_loss, l1_loss
from .tensor import Parameter, Tensor

TOL = 1e-3
H = 1e-4


def _param(rng, shape, name, scale=1.0, offset=0.0):
    return Parameter((rng.normal(size=shape) * scale + offset).astype(np.float32), name)


def _smooth_loss(y):
    return O.mean_all(O.mul(y, y))


def _perturb(module, rng, scale=0.05):
    """Move parameters off special initialization points (zeros, ones)."""
    for p in module.parameters():
        p.data = (p.data + rng.normal(scale=scale, size=p.shape)).astype(p.data.dtype)
    return module


def _module_check(module, x, extra_inputs=(), max_coords=12, seed=0):
    params = [x] + [t for t in extra_inputs] + module.parameters()

    def forward():
        return _smooth_loss(module(x, *extra_inputs))

    return grad_check(forward, params, h=H, tol=TOL, max_coords=max_coords, seed=seed)


# -- ops scope ----------------------------------------------------------------


def _check_conv2d():
    rng = np.random.default_rng(101)
    x = _param(rng, (2, 3, 8, 8), "x")
    k = _param(rng, (4, 3, 3, 3), "k")
    b = _param(rng, (4,), "b")
    return grad_check(
        lambda: _smooth_loss(O.conv2d(x, k, b, padding=1)), [x, k, b], h=H, tol=TOL
    )


def _check_conv2d_strided_dilated():
    rng = np.random.default_rng(102)
    x = _param(rng, (1, 2, 10, 10), "x")
    k = _param(rng, (3, 2, 3, 3), "k")
    return grad_check(
        lambda: _smooth_loss(O.conv2d(x, k, stride=2, dilation=2, padding=2)),
        [x, k], h=H, tol=TOL,
    )


def _check_pixel_shuffle():
    rng = np.random.default_rng(103)
    x = _param(rng, (1, 8, 4, 4), "x")
    return grad_check(
        lambda: _smooth_loss(O.pixel_unshuffle(O.pixel_shuffle(x, 2), 2)),
        [x], h=H, tol=TOL,
    )


def _check_bilinear():
    rng = np.random.default_rng(104)
    x = _param(rng, (1, 3, 5, 7), "x")
    return grad_check(
        lambda: _smooth_loss(O.bilinear_resize(x, 9, 4)), [x], h=H, tol=TOL
    )


def _check_elementwise():
    rng = np.random.default_rng(105)
    x = _param(rng, (2, 4, 4, 4), "x", offset=0.3)
    w = _param(rng, (2, 4, 1, 1), "w")
    m = _param(rng, (2, 1, 4, 4), "m")
    v = _param(rng, (4,), "v")
    s = _param(rng, (1,), "s", offset=1.0)

    def forward():
        y = O.mul_channel(O.sigmoid(x), w)
        y = O.mul_spatial(y, m)
        y = O.mul_cvec(y, v)
        y = O.scale(y, s)
        y = O.add(y, O.lrelu(x, 0.2))
        return _smooth_loss(y)

    return grad_check(forward, [x, w, m, v, s], h=H, tol=TOL)


def _check_reductions():
    rng = np.random.default_rng(106)
    x = _param(rng, (2, 4, 6, 6), "x")

    def forward():
        pooled = O.global_avg_pool(x)
        std = O.instance_standardize(x)
        return O.add(_smooth_loss(std), _smooth_loss(pooled))

    return grad_check(forward, [x], h=H, tol=TOL)


def _check_structure():
    rng = np.random.default_rng(107)
    a = _param(rng, (1, 2, 4, 4), "a")
    b = _param(rng, (1, 3, 4, 4), "b")

    def forward():
        cat = O.concat([a, b], axis=1)
        mid = O.narrow(cat, 1, 1, 3)
        return _smooth_loss(O.reshape(mid, (1, 3, 16, 1)))

    return grad_check(forward, [a, b], h=H, tol=TOL)


def _check_abs_mean():
    rng = np.random.default_rng(108)
    x = _param(rng, (3, 5), "x", offset=0.7)  # kept away from the |.| kink
    return grad_check(lambda: O.mean_all(O.absolute(x)), [x], h=H, tol=TOL)


# -- blocks scope ----------------------------------------------------------------


def _check_smoothed_atrous():
    rng = np.random.default_rng(201)
    mod = SmoothedAtrousConv(4, 3, 2, rng)
    x = _param(rng, (1, 4, 8, 8), "input")
    return _module_check(mod, x)


def _check_adaptive_norm():
    rng = np.random.default_rng(202)
    mod = _perturb(AdaptiveNorm(), rng, scale=0.3)
    x = _param(rng, (2, 3, 6, 6), "input")
    return _module_check(mod, x)


def _check_channel_attention():
    rng = np.random.default_rng(203)
    mod = ChannelAttention(8, 1, rng)
    x = _param(rng, (2, 8, 5, 5), "input")
    return _module_check(mod, x)


def _check_pixel_attention():
    rng = np.random.default_rng(204)
    mod = PixelAttention(8, 1, rng)
    x = _param(rng, (2, 8, 5, 5), "input")
    return _module_check(mod, x)


def _check_gated_fusion():
    rng = np.random.default_rng(205)
    mod = GatedFusion(4, 2, rng)
    f0 = _param(rng, (1, 4, 5, 5), "f0")
    f1 = _param(rng, (1, 4, 5, 5), "f1")
    params = [f0, f1] + mod.parameters()
    return grad_check(lambda: _smooth_loss(mod([f0, f1])), params, h=H, tol=TOL,
                      max_coords=12)


def _check_residual_block():
    rng = np.random.default_rng(206)
    mod = AtrousResidualBlock(8, [1, 2], rng)
    x = _param(rng, (1, 8, 8, 8), "input")
    return _module_check(mod, x, max_coords=6)


def _check_guided_filter():
    rng = np.random.default_rng(207)
    net = GuidedFilterNet(rng, GuidedFilterConfig(transform_dilations=(1, 2)))
    _perturb(net, rng)
    x_h = _param(rng, (1, 3, 8, 8), "x_h", scale=0.5)
    x_l = _param(rng, (1, 3, 4, 4), "x_l", scale=0.5)
    y_l = _param(rng, (1, 3, 4, 4), "y_l", scale=0.5)
    return _module_check(net, x_h, extra_inputs=(x_l, y_l), max_coords=6, seed=1)


def _check_l1():
    rng = np.random.default_rng(208)
    p = _param(rng, (2, 3, 4, 4), "pred")
    t = Tensor((rng.normal(size=(2, 3, 4, 4)) + 2.0).astype(np.float32))
    return grad_check(lambda: l1_loss(p, t), [p], h=H, tol=TOL)


def _check_cobi():
    rng = np.random.default_rng(209)
    p = Parameter(rng.uniform(-0.8, 0.8, size=(3, 4, 4)).astype(np.float32), "pred")
    q = Parameter(rng.uniform(-0.8, 0.8, size=(3, 4, 4)).astype(np.float32), "target")
    cfg = CobiConfig(gamma=0.5)
    return grad_check(lambda: cobi_loss(p, q, cfg), [p, q], h=H, tol=TOL, max_coords=24)


# -- e2e scope ---------------------------------------------------------------------


# Network-scale probes use a smaller step: perturbing a shared scalar
# moves thousands of pre-activations, so at h=1e-4 some rectifier kink is
# almost always straddled; the straddle error shrinks linearly with h
# while float64 evaluation keeps difference noise near 1e-11.
H_E2E = 1e-5


def _check_lrnet_e2e():
    rng = np.random.default_rng(301)
    net = LRNet(LRNetConfig(num_groups=1, blocks_per_group=1, channels=8), rng)
    net.bind_names("lrnet")
    x = _param(rng, (1, 3, 16, 32), "input", scale=0.5)
    t = Tensor(rng.normal(size=(1, 3, 16, 32)).astype(np.float32))
    params = [x] + net.parameters()
    return grad_check(
        lambda: _smooth_loss(O.sub(net(x), t)), params, h=H_E2E, tol=TOL, max_coords=4
    )


def _check_dagf_e2e():
    rng = np.random.default_rng(302)
    cfg = DagfConfig(
        lrnet=LRNetConfig(num_groups=1, blocks_per_group=1, channels=16),
        downsample_factor=2,
    )
    net = _perturb(DagfNet(cfg, rng), rng)
    x = _param(rng, (1, 3, 32, 64), "input", scale=0.5)
    t = Tensor(rng.normal(size=(1, 3, 32, 64)).astype(np.float32))
    params = [x] + net.parameters()
    return grad_check(
        lambda: _smooth_loss(O.sub(net(x), t)), params, h=H_E2E, tol=TOL, max_coords=3
    )


SCOPES = {
    "ops": [
        ("conv2d", _check_conv2d),
        ("conv2d_strided_dilated", _check_conv2d_strided_dilated),
        ("pixel_shuffle_pair", _check_pixel_shuffle),
        ("bilinear_resize", _check_bilinear),
        ("elementwise_suite", _check_elementwise),
        ("reductions", _check_reductions),
        ("structure_ops", _check_structure),
        ("abs_mean", _check_abs_mean),
    ],
    "blocks": [
        ("smoothed_atrous_conv", _check_smoothed_atrous),
        ("adaptive_norm", _check_adaptive_norm),
        ("channel_attention", _check_channel_attention),
        ("pixel_attention", _check_pixel_attention),
        ("gated_fusion", _check_gated_fusion),
        ("atrous_residual_block", _check_residual_block),
        ("guided_filter_forward", _check_guided_filter),
        ("l1_loss", _check_l1),
        ("cobi_loss", _check_cobi),
    ],
    "e2e": [
        ("lrnet_small", _check_lrnet_e2e),
        ("dagf_tiny", _check_dagf_e2e),
    ],
}


def run_scope(scope: str):
    """Run the named checks of one scope; returns (all_passed, report lines)."""
    if scope not in SCOPES:
        raise KeyError(f"unknown gradcheck scope {scope!r} (use ops|blocks|e2e)")
    lines = []
    ok = True
    for name, fn in SCOPES[scope]:
        report = fn()
        status = "pass" if report.passed else "FAIL"
        ok = ok and report.passed
        lines.append(f"{status} {scope}/{name}: max rel err {report.max_error:.3e}")
        if not report.passed:
            for f in report.failures[:5]:
                lines.append(
                    f"     {f.param}{f.coord}: analytic {f.analytic:.6g} "
                    f"vs numeric {f.numeric:.6g} (err {f.error:.3e})"
                )
    return ok, lines
