"""Vectorized convolution kernels (im2col / GEMM path).

These are raw numeric routines on numpy arrays; the autograd layer in
`ops` wraps them.  Inner products run in float64 and the result is cast
back to the input dtype, so float32 storage never loses reduction
precision.  The direct-loop reference lives in `_native.pyx`; this module
is the fallback selected when the extension is not built.
"""

import numpy as np


def _out_extent(size, pad, dil, k, stride):
    return (size + 2 * pad - dil * (k - 1) - 1) // stride + 1


def _patch_view(xp, kh, kw, stride, dil, oh, ow):
    """Strided view of the padded input with shape (N, C, KH, KW, OH, OW)."""
    n, c = xp.shape[:2]
    sn, sc, sh, sw = xp.strides
    shape = (n, c, kh, kw, oh, ow)
    strides = (sn, sc, sh * dil, sw * dil, sh * stride, sw * stride)
    return np.lib.stride_tricks.as_strided(xp, shape=shape, strides=strides)


def conv2d_forward(x, k, stride, dilation, pad_h, pad_w):
    n, c, h, w = x.shape
    o, _, kh, kw = k.shape
    oh = _out_extent(h, pad_h, dilation, kh, stride)
    ow = _out_extent(w, pad_w, dilation, kw, stride)
    xp = np.pad(x, ((0, 0), (0, 0), (pad_h, pad_h), (pad_w, pad_w)))
    patches = _patch_view(xp, kh, kw, stride, dilation, oh, ow)
    cols = patches.reshape(n, c * kh * kw, oh * ow).astype(np.float64)
    km = k.reshape(o, c * kh * kw).astype(np.float64)
    out = np.matmul(km, cols)
    return np.ascontiguousarray(out.reshape(n, o, oh, ow).astype(x.dtype))


def conv2d_grad_input(gy, k, x_shape, stride, dilation, pad_h, pad_w):
    n, c, h, w = x_shape
    o, _, kh, kw = k.shape
    oh, ow = gy.shape[2], gy.shape[3]
    km = k.reshape(o, c * kh * kw).astype(np.float64)
    g = gy.reshape(n, o, oh * ow).astype(np.float64)
    cols = np.matmul(km.T, g)  # (N, C*KH*KW, OH*OW)
    cols = cols.reshape(n, c, kh, kw, oh, ow)
    # col2im: scatter-add each kernel tap back onto the padded canvas.
    gxp = np.zeros((n, c, h + 2 * pad_h, w + 2 * pad_w), dtype=np.float64)
    for i in range(kh):
        hi = i * dilation
        for j in range(kw):
            wj = j * dilation
            gxp[:, :, hi : hi + stride * oh : stride, wj : wj + stride * ow : stride] += cols[
                :, :, i, j
            ]
    gx = gxp[:, :, pad_h : pad_h + h, pad_w : pad_w + w]
    return np.ascontiguousarray(gx.astype(gy.dtype))


def conv2d_grad_kernel(x, gy, k_shape, stride, dilation, pad_h, pad_w):
    n, c = x.shape[:2]
    o, _, kh, kw = k_shape
    oh, ow = gy.shape[2], gy.shape[3]
    xp = np.pad(x, ((0, 0), (0, 0), (pad_h, pad_h), (pad_w, pad_w)))
    patches = _patch_view(xp, kh, kw, stride, dilation, oh, ow)
    cols = patches.reshape(n, c * kh * kw, oh * ow).astype(np.float64)
    g = gy.reshape(n, o, oh * ow).astype(np.float64)
    gk = np.einsum("nop,nqp->oq", g, cols, optimize=True)
    return np.ascontiguousarray(gk.reshape(o, c, kh, kw).astype(gy.dtype))
