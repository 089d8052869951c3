# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Direct-loop convolution kernels.

Compiled reference for the hot inner loops.  Loops are organized per
kernel tap with hoisted valid ranges, so the innermost loop is a
branch-free contiguous walk the C compiler can vectorize; accumulation
happens in float64 planes, storage in the caller's dtype.  Single
threaded and bitwise reproducible; the numpy im2col path in
`_conv_numpy` must agree with these kernels to 1e-6.
"""

import numpy as np

cimport cython

ctypedef fused real:
    float
    double


cdef inline Py_ssize_t _ceil_div(Py_ssize_t a, Py_ssize_t b):
    if a <= 0:
        return 0
    return (a + b - 1) // b


cdef inline void _tap_range(Py_ssize_t pad, Py_ssize_t tap, Py_ssize_t dil,
                            Py_ssize_t stride, Py_ssize_t extent,
                            Py_ssize_t out_extent,
                            Py_ssize_t* lo, Py_ssize_t* hi):
    """Output index range [lo, hi) whose input index pad-shifted by this
    tap lands inside [0, extent)."""
    cdef Py_ssize_t offset = tap * dil - pad
    lo[0] = _ceil_div(-offset, stride)
    hi[0] = _ceil_div(extent - offset, stride)
    if hi[0] > out_extent:
        hi[0] = out_extent
    if lo[0] > hi[0]:
        lo[0] = hi[0]


def conv2d_forward(real[:, :, :, ::1] x, real[:, :, :, ::1] k,
                   int stride, int dilation, int pad_h, int pad_w):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t o = k.shape[0], kh = k.shape[2], kw = k.shape[3]
    cdef Py_ssize_t oh = (h + 2 * pad_h - dilation * (kh - 1) - 1) // stride + 1
    cdef Py_ssize_t ow = (w + 2 * pad_w - dilation * (kw - 1) - 1) // stride + 1

    acc_arr = np.zeros((oh, ow), dtype=np.float64)
    cdef double[:, ::1] acc = acc_arr
    if real is float:
        out_arr = np.empty((n, o, oh, ow), dtype=np.float32)
    else:
        out_arr = np.empty((n, o, oh, ow), dtype=np.float64)
    cdef real[:, :, :, ::1] out = out_arr

    cdef Py_ssize_t b, i, ci, u, v, p, q, ih, iw0
    cdef Py_ssize_t p0, p1, q0, q1
    cdef double wgt
    for b in range(n):
        for i in range(o):
            acc[:, :] = 0.0
            for ci in range(c):
                for u in range(kh):
                    _tap_range(pad_h, u, dilation, stride, h, oh, &p0, &p1)
                    for v in range(kw):
                        _tap_range(pad_w, v, dilation, stride, w, ow, &q0, &q1)
                        wgt = <double> k[i, ci, u, v]
                        if wgt == 0.0:
                            continue
                        for p in range(p0, p1):
                            ih = p * stride - pad_h + u * dilation
                            iw0 = q0 * stride - pad_w + v * dilation
                            if stride == 1:
                                for q in range(q0, q1):
                                    acc[p, q] += wgt * <double> x[b, ci, ih, iw0 + q - q0]
                            else:
                                for q in range(q0, q1):
                                    acc[p, q] += wgt * <double> x[b, ci, ih, iw0 + (q - q0) * stride]
            for p in range(oh):
                for q in range(ow):
                    out[b, i, p, q] = <real> acc[p, q]
    return out_arr


def conv2d_grad_input(real[:, :, :, ::1] gy, real[:, :, :, ::1] k,
                      x_shape, int stride, int dilation, int pad_h, int pad_w):
    cdef Py_ssize_t n = x_shape[0], c = x_shape[1], h = x_shape[2], w = x_shape[3]
    cdef Py_ssize_t o = k.shape[0], kh = k.shape[2], kw = k.shape[3]
    cdef Py_ssize_t oh = gy.shape[2], ow = gy.shape[3]

    gx_arr = np.zeros((n, c, h, w), dtype=np.float64)
    cdef double[:, :, :, ::1] gx = gx_arr

    cdef Py_ssize_t b, i, ci, u, v, p, q, ih, iw0
    cdef Py_ssize_t p0, p1, q0, q1
    cdef double wgt
    for b in range(n):
        for i in range(o):
            for ci in range(c):
                for u in range(kh):
                    _tap_range(pad_h, u, dilation, stride, h, oh, &p0, &p1)
                    for v in range(kw):
                        _tap_range(pad_w, v, dilation, stride, w, ow, &q0, &q1)
                        wgt = <double> k[i, ci, u, v]
                        if wgt == 0.0:
                            continue
                        for p in range(p0, p1):
                            ih = p * stride - pad_h + u * dilation
                            iw0 = q0 * stride - pad_w + v * dilation
                            if stride == 1:
                                for q in range(q0, q1):
                                    gx[b, ci, ih, iw0 + q - q0] += wgt * <double> gy[b, i, p, q]
                            else:
                                for q in range(q0, q1):
                                    gx[b, ci, ih, iw0 + (q - q0) * stride] += wgt * <double> gy[b, i, p, q]
    if real is float:
        return gx_arr.astype(np.float32)
    return gx_arr


def conv2d_grad_kernel(real[:, :, :, ::1] x, real[:, :, :, ::1] gy,
                       k_shape, int stride, int dilation, int pad_h, int pad_w):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t o = k_shape[0], kh = k_shape[2], kw = k_shape[3]
    cdef Py_ssize_t oh = gy.shape[2], ow = gy.shape[3]

    gk_arr = np.zeros((o, c, kh, kw), dtype=np.float64)
    cdef double[:, :, :, ::1] gk = gk_arr

    cdef Py_ssize_t b, i, ci, u, v, p, q, ih, iw0
    cdef Py_ssize_t p0, p1, q0, q1
    cdef double acc
    for b in range(n):
        for i in range(o):
            for ci in range(c):
                for u in range(kh):
                    _tap_range(pad_h, u, dilation, stride, h, oh, &p0, &p1)
                    for v in range(kw):
                        _tap_range(pad_w, v, dilation, stride, w, ow, &q0, &q1)
                        acc = 0.0
                        for p in range(p0, p1):
                            ih = p * stride - pad_h + u * dilation
                            iw0 = q0 * stride - pad_w + v * dilation
                            if stride == 1:
                                for q in range(q0, q1):
                                    acc += <double> gy[b, i, p, q] * <double> x[b, ci, ih, iw0 + q - q0]
                            else:
                                for q in range(q0, q1):
                                    acc += <double> gy[b, i, p, q] * <double> x[b, ci, ih, iw0 + (q - q0) * stride]
                        gk[i, ci, u, v] += acc
    if real is float:
        return gk_arr.astype(np.float32)
    return gk_arr
