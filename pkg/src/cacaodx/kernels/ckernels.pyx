# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: direct-loop convolution and average pooling.

Same contracts and signatures as pykernels. The stride-1 paths (the
ones training actually runs) walk raw row pointers so the width loops
vectorize, and parallelize over slices that each thread owns outright:
every output element is accumulated in one fixed order by one thread,
so results are bitwise deterministic whatever the thread count. Fused
types keep the float64 path available for gradient checking.
"""

import numpy as np

from cython.parallel cimport parallel, prange
from libc.stdlib cimport free, malloc


ctypedef fused real:
    float
    double


def _conv2d_forward_s1(real[:, :, :, ::1] xp, real[:, :, :, ::1] w, real[::1] bias,
                       real[:, :, :, ::1] out):
    cdef Py_ssize_t n = xp.shape[0], cin = xp.shape[1]
    cdef Py_ssize_t fo = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ho = out.shape[2], wo = out.shape[3]
    cdef Py_ssize_t bf, b, f, c, i, j, y, x
    cdef bint k3 = kh == 3 and kw == 3
    cdef real wv, w00, w01, w02, w10, w11, w12, w20, w21, w22
    cdef real *acc
    cdef real *xrow
    cdef real *r0
    cdef real *r1
    cdef real *r2
    cdef real *orow
    with nogil, parallel():
        acc = <real *> malloc(wo * sizeof(real))
        for bf in prange(n * fo, schedule="static"):
            b = bf // fo
            f = bf % fo
            for y in range(ho):
                for x in range(wo):
                    acc[x] = bias[f]
                if k3:
                    for c in range(cin):
                        w00 = w[f, c, 0, 0]; w01 = w[f, c, 0, 1]; w02 = w[f, c, 0, 2]
                        w10 = w[f, c, 1, 0]; w11 = w[f, c, 1, 1]; w12 = w[f, c, 1, 2]
                        w20 = w[f, c, 2, 0]; w21 = w[f, c, 2, 1]; w22 = w[f, c, 2, 2]
                        r0 = &xp[b, c, y, 0]
                        r1 = &xp[b, c, y + 1, 0]
                        r2 = &xp[b, c, y + 2, 0]
                        for x in range(wo):
                            acc[x] = acc[x] + (
                                w00 * r0[x] + w01 * r0[x + 1] + w02 * r0[x + 2]
                                + w10 * r1[x] + w11 * r1[x + 1] + w12 * r1[x + 2]
                                + w20 * r2[x] + w21 * r2[x + 1] + w22 * r2[x + 2])
                else:
                    for c in range(cin):
                        for i in range(kh):
                            for j in range(kw):
                                wv = w[f, c, i, j]
                                xrow = &xp[b, c, y + i, j]
                                for x in range(wo):
                                    acc[x] = acc[x] + wv * xrow[x]
                orow = &out[b, f, y, 0]
                for x in range(wo):
                    orow[x] = acc[x]
        free(acc)


def _conv2d_forward_gen(real[:, :, :, ::1] xp, real[:, :, :, ::1] w,
                        int stride, real[:, :, :, ::1] out):
    cdef Py_ssize_t n = xp.shape[0], cin = xp.shape[1]
    cdef Py_ssize_t fo = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ho = out.shape[2], wo = out.shape[3]
    cdef Py_ssize_t b, f, c, i, j, y, x, yb
    cdef real wv
    with nogil:
        for b in range(n):
            for f in range(fo):
                for c in range(cin):
                    for i in range(kh):
                        for j in range(kw):
                            wv = w[f, c, i, j]
                            for y in range(ho):
                                yb = y * stride + i
                                for x in range(wo):
                                    out[b, f, y, x] += wv * xp[b, c, yb, x * stride + j]


def _conv2d_backward_s1(real[:, :, :, ::1] xp, real[:, :, :, ::1] w,
                        real[:, :, :, ::1] d_out,
                        real[:, :, :, ::1] d_xp, real[:, :, :, ::1] d_w,
                        real[::1] d_b):
    cdef Py_ssize_t n = xp.shape[0], cin = xp.shape[1]
    cdef Py_ssize_t fo = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ho = d_out.shape[2], wo = d_out.shape[3]
    cdef Py_ssize_t bc, b, f, c, i, j, y, x
    cdef real wv, total
    cdef real *acc
    cdef real *grow
    cdef real *xrow
    cdef real *dxrow

    # bias and weight gradients: each f is owned by one thread; inner
    # loops run in fixed (b, c, i, j, y, x) order, one scratch row per
    # kernel tap (side-by-side accumulation measures store-bound here).
    with nogil, parallel():
        acc = <real *> malloc(wo * sizeof(real))
        for f in prange(fo, schedule="static"):
            total = 0
            for b in range(n):
                for y in range(ho):
                    grow = &d_out[b, f, y, 0]
                    for x in range(wo):
                        total = total + grow[x]
            d_b[f] = total
            for c in range(cin):
                for i in range(kh):
                    for j in range(kw):
                        for x in range(wo):
                            acc[x] = 0
                        for b in range(n):
                            for y in range(ho):
                                grow = &d_out[b, f, y, 0]
                                xrow = &xp[b, c, y + i, j]
                                for x in range(wo):
                                    acc[x] = acc[x] + grow[x] * xrow[x]
                        total = 0
                        for x in range(wo):
                            total = total + acc[x]
                        d_w[f, c, i, j] = total
        free(acc)

    # input gradient: each (b, c) plane is owned by one thread; one
    # saxpy row per kernel tap.
    with nogil:
        for bc in prange(n * cin, schedule="static"):
            b = bc // cin
            c = bc % cin
            for f in range(fo):
                for i in range(kh):
                    for j in range(kw):
                        wv = w[f, c, i, j]
                        for y in range(ho):
                            dxrow = &d_xp[b, c, y + i, j]
                            grow = &d_out[b, f, y, 0]
                            for x in range(wo):
                                dxrow[x] = dxrow[x] + wv * grow[x]


def _conv2d_backward_gen(real[:, :, :, ::1] xp, real[:, :, :, ::1] w,
                         real[:, :, :, ::1] d_out, int stride,
                         real[:, :, :, ::1] d_xp, real[:, :, :, ::1] d_w,
                         real[::1] d_b):
    cdef Py_ssize_t n = xp.shape[0], cin = xp.shape[1]
    cdef Py_ssize_t fo = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ho = d_out.shape[2], wo = d_out.shape[3]
    cdef Py_ssize_t b, f, c, i, j, y, x, yb, xb
    cdef real wv, g, acc
    with nogil:
        for b in range(n):
            for f in range(fo):
                for y in range(ho):
                    for x in range(wo):
                        d_b[f] += d_out[b, f, y, x]
                for c in range(cin):
                    for i in range(kh):
                        for j in range(kw):
                            wv = w[f, c, i, j]
                            acc = 0
                            for y in range(ho):
                                yb = y * stride + i
                                for x in range(wo):
                                    xb = x * stride + j
                                    g = d_out[b, f, y, x]
                                    acc += g * xp[b, c, yb, xb]
                                    d_xp[b, c, yb, xb] += g * wv
                            d_w[f, c, i, j] += acc


def _avgpool_forward_k(real[:, :, :, ::1] x, int window, int stride,
                       real[:, :, :, ::1] out):
    cdef Py_ssize_t n = x.shape[0], cin = x.shape[1]
    cdef Py_ssize_t ho = out.shape[2], wo = out.shape[3]
    cdef Py_ssize_t bc, b, c, i, j, y, xx
    cdef real acc
    cdef real inv = <real> (1.0 / (window * window))
    with nogil:
        for bc in prange(n * cin, schedule="static"):
            b = bc // cin
            c = bc % cin
            for y in range(ho):
                for xx in range(wo):
                    acc = 0
                    for i in range(window):
                        for j in range(window):
                            acc = acc + x[b, c, y * stride + i, xx * stride + j]
                    out[b, c, y, xx] = acc * inv


def _avgpool_backward_k(real[:, :, :, ::1] d_out, int window, int stride,
                        real[:, :, :, ::1] d_x):
    cdef Py_ssize_t n = d_out.shape[0], cin = d_out.shape[1]
    cdef Py_ssize_t ho = d_out.shape[2], wo = d_out.shape[3]
    cdef Py_ssize_t bc, b, c, i, j, y, xx
    cdef real share
    cdef real inv = <real> (1.0 / (window * window))
    with nogil:
        for bc in prange(n * cin, schedule="static"):
            b = bc // cin
            c = bc % cin
            for y in range(ho):
                for xx in range(wo):
                    share = d_out[b, c, y, xx] * inv
                    for i in range(window):
                        for j in range(window):
                            d_x[b, c, y * stride + i, xx * stride + j] += share


def conv2d_forward(x, w, b, int stride, int pad):
    """Cross-correlation of NCHW input with FCHW weights plus bias."""
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    x = np.ascontiguousarray(x)
    w = np.ascontiguousarray(w)
    n, _, h, wd = x.shape
    f, _, kh, kw = w.shape
    ho = (h - kh) // stride + 1
    wo = (wd - kw) // stride + 1
    bias = np.ascontiguousarray(b, dtype=x.dtype)
    out = np.empty((n, f, ho, wo), dtype=x.dtype)
    if stride == 1:
        _conv2d_forward_s1(x, w, bias, out)
    else:
        out[:] = bias.reshape(1, f, 1, 1)
        _conv2d_forward_gen(x, w, stride, out)
    return out


def conv2d_backward(x, w, int stride, int pad, d_out):
    """Gradients of conv2d_forward w.r.t. input, weights and bias."""
    n, c, h, wd = x.shape
    if pad:
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    else:
        xp = x
    xp = np.ascontiguousarray(xp)
    w = np.ascontiguousarray(w)
    d_out = np.ascontiguousarray(d_out)
    d_xp = np.zeros_like(xp)
    d_w = np.zeros_like(w)
    d_b = np.zeros(w.shape[0], dtype=x.dtype)
    if stride == 1:
        _conv2d_backward_s1(xp, w, d_out, d_xp, d_w, d_b)
    else:
        _conv2d_backward_gen(xp, w, d_out, stride, d_xp, d_w, d_b)
    d_x = d_xp[:, :, pad : pad + h, pad : pad + wd] if pad else d_xp
    return np.ascontiguousarray(d_x), d_w, d_b


def avgpool_forward(x, int window, int stride):
    """Mean over window x window patches; channel count unchanged."""
    x = np.ascontiguousarray(x)
    n, c, h, wd = x.shape
    ho = (h - window) // stride + 1
    wo = (wd - window) // stride + 1
    out = np.empty((n, c, ho, wo), dtype=x.dtype)
    _avgpool_forward_k(x, window, stride, out)
    return out


def avgpool_backward(x_shape, int window, int stride, d_out):
    """Distribute each output gradient evenly across its input window."""
    d_out = np.ascontiguousarray(d_out)
    d_x = np.zeros(tuple(x_shape), dtype=d_out.dtype)
    _avgpool_backward_k(d_out, window, stride, d_x)
    return d_x
