"""Pure-numpy conv kernels (im2col + BLAS), the fallback backend.

Shapes follow the single-sample convention used throughout the generator:
inputs are ``(C_in, H, W)``, weights ``(C_out, C_in, kh, kw)`` with odd
kernel extents, zero 'same' padding of ``k // 2``, stride 1 or 2.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _pad(x, p):
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (p, p), (p, p)))


def _cols(x, kh, kw, stride):
    """im2col matrix (C_in*kh*kw, Ho*Wo) of the padded input."""
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    Ci, Ho, Wo = win.shape[:3]
    return win.transpose(0, 3, 4, 1, 2).reshape(Ci * kh * kw, Ho * Wo), Ho, Wo


def conv2d_forward(x, w, bias, stride):
    Co, Ci, kh, kw = w.shape
    xp = _pad(x, kh // 2)
    cols, Ho, Wo = _cols(xp, kh, kw, stride)
    y = (w.reshape(Co, -1) @ cols).reshape(Co, Ho, Wo)
    if bias is not None:
        y += bias[:, None, None]
    return y


def conv2d_backward_input(gy, w, stride, in_shape):
    Co, Ci, kh, kw = w.shape
    H, W = in_shape
    p = kh // 2
    Ho, Wo = gy.shape[1], gy.shape[2]
    cols_g = (w.reshape(Co, -1).T @ gy.reshape(Co, -1)).reshape(Ci, kh, kw, Ho, Wo)
    gxp = np.zeros((Ci, H + 2 * p, W + 2 * p), dtype=gy.dtype)
    for ki in range(kh):
        for kj in range(kw):
            gxp[:, ki:ki + stride * Ho:stride,
                kj:kj + stride * Wo:stride] += cols_g[:, ki, kj]
    return gxp[:, p:p + H, p:p + W]


def conv2d_backward_weights(gy, x, stride, kernel_shape):
    Co, Ci, kh, kw = kernel_shape
    xp = _pad(x, kh // 2)
    cols, Ho, Wo = _cols(xp, kh, kw, stride)
    return (gy.reshape(Co, -1) @ cols.T).reshape(Co, Ci, kh, kw)
