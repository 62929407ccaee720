# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled conv kernels: direct convolution with OpenMP over channels.

Same contracts as kernels._reference; float32 and float64 via fused types.
Parallel loops partition writes by output (forward, weights) or input
(backward-input) channel, so results are deterministic for any thread
count.
"""
import numpy as np

cimport cython
from cython.parallel import prange

ctypedef fused real:
    float
    double


def conv2d_forward(x, w, bias, int stride):
    cdef Py_ssize_t p = w.shape[2] // 2
    xp = np.pad(x, ((0, 0), (p, p), (p, p))) if p else np.ascontiguousarray(x)
    Ho = (x.shape[1] + 2 * p - w.shape[2]) // stride + 1
    Wo = (x.shape[2] + 2 * p - w.shape[3]) // stride + 1
    out = np.empty((w.shape[0], Ho, Wo), dtype=x.dtype)
    if bias is None:
        bias = np.zeros(w.shape[0], dtype=x.dtype)
    _forward(xp, w, bias, out, stride)
    return out


def conv2d_backward_input(gy, w, int stride, in_shape):
    cdef Py_ssize_t p = w.shape[2] // 2
    H, W = in_shape
    gxp = np.zeros((w.shape[1], H + 2 * p, W + 2 * p), dtype=gy.dtype)
    _backward_input(np.ascontiguousarray(gy), w, gxp, stride)
    return np.ascontiguousarray(gxp[:, p:p + H, p:p + W])


def conv2d_backward_weights(gy, x, int stride, kernel_shape):
    cdef Py_ssize_t p = kernel_shape[2] // 2
    xp = np.pad(x, ((0, 0), (p, p), (p, p))) if p else np.ascontiguousarray(x)
    gw = np.empty(tuple(kernel_shape), dtype=gy.dtype)
    _backward_weights(np.ascontiguousarray(gy), xp, gw, stride)
    return gw


def _forward(real[:, :, ::1] xp, real[:, :, :, ::1] w, real[::1] bias,
             real[:, :, ::1] out, int stride):
    cdef Py_ssize_t Co = w.shape[0], Ci = w.shape[1]
    cdef Py_ssize_t kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t Ho = out.shape[1], Wo = out.shape[2]
    cdef Py_ssize_t co, ci, ki, kj, i, j
    cdef real wv
    with nogil:
        for co in prange(Co, schedule='static'):
            for i in range(Ho):
                for j in range(Wo):
                    out[co, i, j] = bias[co]
            for ci in range(Ci):
                for ki in range(kh):
                    for kj in range(kw):
                        wv = w[co, ci, ki, kj]
                        for i in range(Ho):
                            for j in range(Wo):
                                out[co, i, j] += wv * xp[ci, i * stride + ki,
                                                         j * stride + kj]


def _backward_input(real[:, :, ::1] gy, real[:, :, :, ::1] w,
                    real[:, :, ::1] gxp, int stride):
    cdef Py_ssize_t Co = w.shape[0], Ci = w.shape[1]
    cdef Py_ssize_t kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t Ho = gy.shape[1], Wo = gy.shape[2]
    cdef Py_ssize_t co, ci, ki, kj, i, j
    cdef real wv
    with nogil:
        for ci in prange(Ci, schedule='static'):
            for co in range(Co):
                for ki in range(kh):
                    for kj in range(kw):
                        wv = w[co, ci, ki, kj]
                        for i in range(Ho):
                            for j in range(Wo):
                                gxp[ci, i * stride + ki,
                                    j * stride + kj] += wv * gy[co, i, j]


cdef inline real _corr_sum(real[:, :, ::1] gy, real[:, :, ::1] xp,
                           Py_ssize_t co, Py_ssize_t ci,
                           Py_ssize_t ki, Py_ssize_t kj, int stride) nogil:
    cdef Py_ssize_t Ho = gy.shape[1], Wo = gy.shape[2]
    cdef Py_ssize_t i, j
    cdef real acc = 0
    for i in range(Ho):
        for j in range(Wo):
            acc += gy[co, i, j] * xp[ci, i * stride + ki, j * stride + kj]
    return acc


def _backward_weights(real[:, :, ::1] gy, real[:, :, ::1] xp,
                      real[:, :, :, ::1] gw, int stride):
    cdef Py_ssize_t Co = gw.shape[0], Ci = gw.shape[1]
    cdef Py_ssize_t kh = gw.shape[2], kw = gw.shape[3]
    cdef Py_ssize_t co, ci, ki, kj
    with nogil:
        for co in prange(Co, schedule='static'):
            for ci in range(Ci):
                for ki in range(kh):
                    for kj in range(kw):
                        gw[co, ci, ki, kj] = _corr_sum(gy, xp, co, ci, ki, kj,
                                                       stride)
