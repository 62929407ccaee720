"""Dense tensor primitives: finiteness checks, centered pad/crop, 2D FFT.

Conventions, fixed once so files and tests are bit-exact:

* images are ``(H, W)`` arrays, datacubes are ``(K, H, W)`` with the k axis
  slowest-varying in memory (C order);
* ``pad_center``/``crop_center`` place the source at row/col offset
  ``floor((big - small) / 2)``;
* the FFT pair uses numpy's default scaling (unnormalized forward,
  ``1/N`` inverse).
"""
import numpy as np

from . import precision


def require_finite(a, what="tensor"):
    """Reject NaN/Inf; returns the array unchanged."""
    if not np.isfinite(a).all():
        raise ValueError(f"{what} contains non-finite values")
    return a


def fft2_forward(t):
    """Unnormalized 2D DFT of a real ``(H, W)`` tensor (complex output)."""
    t = np.asarray(t)
    require_finite(t, "fft2 input")
    return np.fft.fft2(t).astype(precision.get_complex_dtype())


def fft2_inverse(spec):
    """Inverse of :func:`fft2_forward`; returns the real part."""
    spec = np.asarray(spec)
    if not np.isfinite(spec.real).all() or not np.isfinite(spec.imag).all():
        raise ValueError("fft2 inverse input contains non-finite values")
    return np.fft.ifft2(spec).real.astype(precision.get_dtype())


def pad_center(t, shape):
    """Zero-pad a 2D tensor to ``shape``, source centered at floor offsets."""
    t = np.asarray(t)
    H, W = t.shape
    H2, W2 = shape
    if H2 < H or W2 < W:
        raise ValueError(f"pad target {shape} smaller than source {(H, W)}")
    out = np.zeros((H2, W2), dtype=t.dtype)
    oy, ox = (H2 - H) // 2, (W2 - W) // 2
    out[oy:oy + H, ox:ox + W] = t
    return out


def crop_center(t, shape):
    """Centered crop of a 2D tensor to ``shape``; exact inverse of pad_center."""
    t = np.asarray(t)
    H2, W2 = t.shape
    H, W = shape
    if H > H2 or W > W2:
        raise ValueError(f"crop target {shape} larger than source {(H2, W2)}")
    oy, ox = (H2 - H) // 2, (W2 - W) // 2
    return t[oy:oy + H, ox:ox + W]


def reduce_sum_k(cube):
    """Sum a ``(K, H, W)`` datacube over k."""
    cube = np.asarray(cube)
    if cube.ndim != 3:
        raise ValueError(f"expected (K, H, W) cube, got shape {cube.shape}")
    return cube.sum(axis=0)


def downsample_mean(t, factor):
    """Block-mean downsample of the trailing two axes by an integer factor."""
    t = np.asarray(t)
    if factor == 1:
        return t
    H, W = t.shape[-2], t.shape[-1]
    if H % factor or W % factor:
        raise ValueError(f"extents {(H, W)} not divisible by factor {factor}")
    shape = t.shape[:-2] + (H // factor, factor, W // factor, factor)
    return t.reshape(shape).mean(axis=(-3, -1))
