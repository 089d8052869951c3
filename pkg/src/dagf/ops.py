"""Differentiable tensor operations.

Each op validates shapes strictly (binary ops require equal shapes; the
only broadcasts are the explicit channel-weight and spatial-map
multiplies plus scalar forms), computes its result with float64
accumulation inside reductions, and records a backward closure returning
one gradient per parent.
"""

from __future__ import annotations

import numpy as np

from . import backend
from .errors import DimensionError
from .tensor import Tensor, record


def _same_shape(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape:
        for axis, (ea, eb) in enumerate(zip(a.shape, b.shape)):
            if ea != eb:
                raise DimensionError(
                    f"{op}: operand shapes {tuple(a.shape)} vs {tuple(b.shape)} "
                    f"differ at axis {axis} ({ea} != {eb})"
                )
        raise DimensionError(
            f"{op}: operand ranks differ ({tuple(a.shape)} vs {tuple(b.shape)})"
        )


def _nchw(x: Tensor, op: str):
    if x.ndim != 4:
        raise DimensionError(f"{op}: expected NCHW input, got rank {x.ndim}")


# -- elementwise -------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    out = Tensor(a.data + b.data)
    return record(out, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    out = Tensor(a.data - b.data)
    return record(out, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Hadamard product; shapes must match exactly."""
    _same_shape(a, b, "mul")
    out = Tensor(a.data * b.data)
    return record(out, (a, b), lambda g: (g * b.data, g * a.data))


def add_scalar(x: Tensor, c: float) -> Tensor:
    out = Tensor(x.data + x.data.dtype.type(c))
    return record(out, (x,), lambda g: (g,))


def mul_scalar(x: Tensor, c: float) -> Tensor:
    out = Tensor(x.data * x.data.dtype.type(c))
    return record(out, (x,), lambda g: (g * x.data.dtype.type(c),))


def scale(x: Tensor, s: Tensor) -> Tensor:
    """Multiply a whole tensor by a learnable single-element scalar."""
    if s.data.size != 1:
        raise DimensionError(f"scale: scalar operand has {s.data.size} elements")
    out = Tensor(x.data * s.data.reshape(()))
    def back(g):
        gs = np.array(np.sum(g * x.data, dtype=np.float64)).reshape(s.shape)
        return (g * s.data.reshape(()), gs)
    return record(out, (x, s), back)


def mul_cvec(x: Tensor, v: Tensor) -> Tensor:
    """Scale channel c of an NCHW tensor by the c-th entry of vector `v`."""
    _nchw(x, "mul_cvec")
    if v.ndim != 1 or v.shape[0] != x.shape[1]:
        raise DimensionError(
            f"mul_cvec: vector shape {tuple(v.shape)} does not match channel axis "
            f"(C={x.shape[1]})"
        )
    w = v.data[None, :, None, None]
    out = Tensor(x.data * w)
    def back(g):
        gv = np.sum(g * x.data, axis=(0, 2, 3), dtype=np.float64)
        return (g * w, gv)
    return record(out, (x, v), back)


def mul_channel(x: Tensor, w: Tensor) -> Tensor:
    """Per-channel gate: x (N,C,H,W) times weights (N,C,1,1)."""
    _nchw(x, "mul_channel")
    n, c = x.shape[0], x.shape[1]
    if w.shape != (n, c, 1, 1):
        raise DimensionError(
            f"mul_channel: weights must be ({n},{c},1,1), got {tuple(w.shape)}"
        )
    out = Tensor(x.data * w.data)
    def back(g):
        gw = np.sum(g * x.data, axis=(2, 3), keepdims=True, dtype=np.float64)
        return (g * w.data, gw)
    return record(out, (x, w), back)


def mul_spatial(x: Tensor, m: Tensor) -> Tensor:
    """Per-pixel gate shared across channels: x (N,C,H,W) times map (N,1,H,W)."""
    _nchw(x, "mul_spatial")
    n, _, h, w_ = x.shape
    if m.shape != (n, 1, h, w_):
        raise DimensionError(
            f"mul_spatial: map must be ({n},1,{h},{w_}), got {tuple(m.shape)}"
        )
    out = Tensor(x.data * m.data)
    def back(g):
        gm = np.sum(g * x.data, axis=1, keepdims=True, dtype=np.float64)
        return (g * m.data, gm)
    return record(out, (x, m), back)


def sigmoid(x: Tensor) -> Tensor:
    e = np.exp(-np.abs(x.data))
    y = np.where(x.data >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype)
    out = Tensor(y)
    return record(out, (x,), lambda g: (g * y * (1.0 - y),))


def lrelu(x: Tensor, alpha: float = 0.2) -> Tensor:
    """Leaky rectifier max(alpha*x, x); slope at exactly 0 is alpha."""
    pos = x.data > 0
    out = Tensor(np.where(pos, x.data, x.data.dtype.type(alpha) * x.data))
    def back(g):
        return (g * np.where(pos, g.dtype.type(1.0), g.dtype.type(alpha)),)
    return record(out, (x,), back)


def relu(x: Tensor) -> Tensor:
    return lrelu(x, 0.0)


def absolute(x: Tensor) -> Tensor:
    out = Tensor(np.abs(x.data))
    return record(out, (x,), lambda g: (g * np.sign(x.data),))


def mean_all(x: Tensor) -> Tensor:
    """Mean over every element, returned as a 0-d scalar tensor."""
    val = np.mean(x.data, dtype=np.float64)
    out = Tensor(np.asarray(val, dtype=x.dtype))
    inv = 1.0 / x.data.size
    def back(g):
        gs = float(np.asarray(g).reshape(-1)[0]) * inv
        return (np.full(x.shape, gs, dtype=np.float64),)
    return record(out, (x,), back)


# -- structure ---------------------------------------------------------------


def concat(tensors, axis: int = 1) -> Tensor:
    ts = list(tensors)
    if not ts:
        raise DimensionError("concat: empty tensor list")
    base = list(ts[0].shape)
    for t in ts[1:]:
        if t.ndim != len(base):
            raise DimensionError("concat: operand ranks differ")
        for ax in range(len(base)):
            if ax != axis and t.shape[ax] != base[ax]:
                raise DimensionError(
                    f"concat: extent mismatch at axis {ax} "
                    f"({t.shape[ax]} != {base[ax]})"
                )
    out = Tensor(np.concatenate([t.data for t in ts], axis=axis))
    offsets = np.cumsum([t.shape[axis] for t in ts])[:-1]
    def back(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, offsets, axis=axis))
    return record(out, tuple(ts), back)


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice `[start, start+length)` along one axis."""
    if start < 0 or start + length > x.shape[axis]:
        raise DimensionError(
            f"narrow: [{start}, {start + length}) exceeds extent {x.shape[axis]} "
            f"of axis {axis}"
        )
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    out = Tensor(np.ascontiguousarray(x.data[idx]))
    def back(g):
        gx = np.zeros(x.shape, dtype=g.dtype)
        gx[idx] = g
        return (gx,)
    return record(out, (x,), back)


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    if int(np.prod(shape)) != x.data.size:
        raise DimensionError(
            f"reshape: cannot view {tuple(x.shape)} as {shape} (size mismatch)"
        )
    out = Tensor(x.data.reshape(shape).copy())
    return record(out, (x,), lambda g: (g.reshape(x.shape),))


def pixel_unshuffle(x: Tensor, s: int) -> Tensor:
    """Space-to-depth: (N,C,H,W) -> (N, C*s*s, H/s, W/s)."""
    _nchw(x, "pixel_unshuffle")
    n, c, h, w = x.shape
    if h % s != 0:
        raise DimensionError(f"pixel_unshuffle: H={h} not divisible by s={s} (axis 2)")
    if w % s != 0:
        raise DimensionError(f"pixel_unshuffle: W={w} not divisible by s={s} (axis 3)")
    y = (
        x.data.reshape(n, c, h // s, s, w // s, s)
        .transpose(0, 1, 3, 5, 2, 4)
        .reshape(n, c * s * s, h // s, w // s)
    )
    out = Tensor(np.ascontiguousarray(y))
    def back(g):
        gi = (
            g.reshape(n, c, s, s, h // s, w // s)
            .transpose(0, 1, 4, 2, 5, 3)
            .reshape(n, c, h, w)
        )
        return (np.ascontiguousarray(gi),)
    return record(out, (x,), back)


def pixel_shuffle(x: Tensor, s: int) -> Tensor:
    """Depth-to-space, exact inverse of `pixel_unshuffle`."""
    _nchw(x, "pixel_shuffle")
    n, c, h, w = x.shape
    if c % (s * s) != 0:
        raise DimensionError(f"pixel_shuffle: C={c} not divisible by s^2={s * s} (axis 1)")
    co = c // (s * s)
    y = (
        x.data.reshape(n, co, s, s, h, w)
        .transpose(0, 1, 4, 2, 5, 3)
        .reshape(n, co, h * s, w * s)
    )
    out = Tensor(np.ascontiguousarray(y))
    def back(g):
        gi = (
            g.reshape(n, co, h, s, w, s)
            .transpose(0, 1, 3, 5, 2, 4)
            .reshape(n, c, h, w)
        )
        return (np.ascontiguousarray(gi),)
    return record(out, (x,), back)


# -- resampling and pooling ---------------------------------------------------


def _interp_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row-interpolation matrix for align-corners-false bilinear sampling."""
    m = np.zeros((n_out, n_in), dtype=np.float64)
    scl = n_in / n_out
    for i in range(n_out):
        src = (i + 0.5) * scl - 0.5
        src = min(max(src, 0.0), n_in - 1.0)
        lo = int(np.floor(src))
        hi = min(lo + 1, n_in - 1)
        w = src - lo
        m[i, lo] += 1.0 - w
        m[i, hi] += w
    return m


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Bilinear resample with sample centers at (i+0.5)*scale - 0.5, edge clamped."""
    _nchw(x, "bilinear_resize")
    if out_h < 1 or out_w < 1:
        raise DimensionError(f"bilinear_resize: output extents must be >= 1, got {out_h}x{out_w}")
    n, c, h, w = x.shape
    my = _interp_matrix(h, out_h)
    mx = _interp_matrix(w, out_w)
    y = np.einsum("ab,ncbd,ed->ncae", my, x.data.astype(np.float64), mx, optimize=True)
    out = Tensor(y.astype(x.dtype))
    def back(g):
        gx = np.einsum("ab,ncad,de->ncbe", my, g.astype(np.float64), mx, optimize=True)
        return (gx,)
    return record(out, (x,), back)


def global_avg_pool(x: Tensor) -> Tensor:
    """Spatial mean per sample and channel: (N,C,H,W) -> (N,C,1,1)."""
    _nchw(x, "global_avg_pool")
    y = np.mean(x.data, axis=(2, 3), keepdims=True, dtype=np.float64)
    out = Tensor(y.astype(x.dtype))
    inv = 1.0 / (x.shape[2] * x.shape[3])
    def back(g):
        return (np.broadcast_to(g * inv, x.shape).copy(),)
    return record(out, (x,), back)


def instance_standardize(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-sample, per-channel standardization (x - mean) / sqrt(var + eps)."""
    _nchw(x, "instance_standardize")
    x64 = x.data.astype(np.float64)
    mu = x64.mean(axis=(2, 3), keepdims=True)
    var = np.mean((x64 - mu) ** 2, axis=(2, 3), keepdims=True)
    sd = np.sqrt(var + eps)
    xhat = (x64 - mu) / sd
    out = Tensor(xhat.astype(x.dtype))
    def back(g):
        g64 = g.astype(np.float64)
        gm = g64.mean(axis=(2, 3), keepdims=True)
        gx = g64 - gm - xhat * np.mean(g64 * xhat, axis=(2, 3), keepdims=True)
        return (gx / sd,)
    return record(out, (x,), back)


# -- convolution --------------------------------------------------------------


def _pad_pair(padding):
    if isinstance(padding, tuple):
        ph, pw = padding
    else:
        ph = pw = int(padding)
    if ph < 0 or pw < 0:
        raise DimensionError(f"conv2d: negative padding ({ph},{pw})")
    return ph, pw


def conv2d(
    x: Tensor,
    kernel: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    dilation: int = 1,
    padding=0,
) -> Tensor:
    """2-D cross-correlation of NCHW input with an OIKK kernel.

    Output extent: (H + 2*pad - dilation*(K-1) - 1) // stride + 1.
    Differentiable with respect to input, kernel and bias.
    """
    _nchw(x, "conv2d")
    if kernel.ndim != 4:
        raise DimensionError(f"conv2d: kernel must be OIKK, got rank {kernel.ndim}")
    n, c, h, w = x.shape
    o, i, kh, kw = kernel.shape
    if i != c:
        raise DimensionError(
            f"conv2d: input channel axis C={c} does not match kernel input extent I={i}"
        )
    if kh % 2 == 0 or kw % 2 == 0:
        raise DimensionError(f"conv2d: kernel spatial extents must be odd, got {kh}x{kw}")
    if stride < 1 or dilation < 1:
        raise DimensionError(f"conv2d: stride/dilation must be >= 1, got {stride}/{dilation}")
    ph, pw = _pad_pair(padding)
    if h + 2 * ph < dilation * (kh - 1) + 1 or w + 2 * pw < dilation * (kw - 1) + 1:
        raise DimensionError(
            f"conv2d: padded input {h + 2 * ph}x{w + 2 * pw} smaller than dilated "
            f"kernel footprint {dilation * (kh - 1) + 1}x{dilation * (kw - 1) + 1}"
        )
    if bias is not None and bias.shape != (o,):
        raise DimensionError(
            f"conv2d: bias shape {tuple(bias.shape)} does not match output channels ({o},)"
        )

    dt = np.promote_types(x.dtype, kernel.dtype)
    xd = np.ascontiguousarray(x.data.astype(dt, copy=False))
    kd = np.ascontiguousarray(kernel.data.astype(dt, copy=False))
    y = backend.conv2d_forward(xd, kd, stride, dilation, ph, pw)
    if bias is not None:
        y = y + bias.data.astype(dt, copy=False)[None, :, None, None]
    out = Tensor(y)

    parents = (x, kernel) if bias is None else (x, kernel, bias)

    def back(g):
        g = np.ascontiguousarray(g.astype(dt, copy=False))
        gx = gk = gb = None
        if x.requires_grad:
            gx = backend.conv2d_grad_input(g, kd, (n, c, h, w), stride, dilation, ph, pw)
        if kernel.requires_grad:
            gk = backend.conv2d_grad_kernel(xd, g, (o, i, kh, kw), stride, dilation, ph, pw)
        if bias is None:
            return (gx, gk)
        if bias.requires_grad:
            gb = np.sum(g, axis=(0, 2, 3), dtype=np.float64)
        return (gx, gk, gb)

    return record(out, parents, back)
