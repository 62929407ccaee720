"""Linear measurement operator for mask-based lensless imaging.

The sensor image is a sum over the k (time/wavelength) axis of masked,
cropped convolutions of each scene slice with the on-axis PSF::

    b = sum_k  M_k * crop( v_k  (*)  h )

with ``(*)`` a linear (non-circular) 2D convolution.  Convolutions are
evaluated as frequency-domain products on ``(2H, 2W)`` zero-padded grids,
which realizes the linear convolution exactly for kernels up to sensor
size; the PSF origin is the array center ``(H//2, W//2)`` and the crop
window is centered, so a centered delta PSF is the identity.

``apply`` and ``adjoint`` are exact transposes of one another; with K = 1
and an all-ones mask the operator reduces (same code path, bit for bit)
to plain convolve-and-crop, and with a binary mask to the erasures model.
"""
import numpy as np

from . import precision
from .core import crop_center, pad_center, require_finite

MASK_KINDS = ("erasure", "shutter-single", "shutter-dual", "spectral-filter", "custom")


class Psf:
    """On-axis point spread function, stored with unit L2 norm.

    The original scale is kept in ``raw_norm`` so raw sensor-calibration
    images round-trip exactly (``raw = image * raw_norm``).
    """

    def __init__(self, image):
        image = precision.asfloat(image)
        if image.ndim != 2:
            raise ValueError(f"PSF must be 2D, got shape {image.shape}")
        require_finite(image, "PSF")
        if (image < 0).any():
            raise ValueError("PSF must be nonnegative")
        norm = float(np.linalg.norm(image))
        if norm == 0.0:
            raise ValueError("PSF must not be all-zero")
        self.image = (image / norm).astype(precision.get_dtype())
        self.raw_norm = norm

    @property
    def shape(self):
        return self.image.shape


class MaskStack:
    """Per-k sensor weighting M_k, shape ``(K, H, W)`` with entries in [0, 1].

    ``kind`` selects the validation contract: erasure masks are binary with
    K = 1, shutter masks are binary and partition the sensor (sum over k is
    one at every pixel), spectral-filter and custom masks may be fractional.
    """

    def __init__(self, masks, kind="custom"):
        masks = precision.asfloat(masks)
        if masks.ndim == 2:
            masks = masks[None]
        if masks.ndim != 3:
            raise ValueError(f"mask stack must be (K, H, W), got {masks.shape}")
        require_finite(masks, "mask stack")
        if kind not in MASK_KINDS:
            raise ValueError(f"unknown mask kind {kind!r}")
        if masks.min() < 0 or masks.max() > 1:
            raise ValueError("mask entries must lie in [0, 1]")
        if kind == "erasure":
            if masks.shape[0] != 1:
                raise ValueError("erasure masks have K = 1")
            if not np.isin(masks, (0.0, 1.0)).all():
                raise ValueError("erasure masks must be binary")
        if kind in ("shutter-single", "shutter-dual"):
            if not np.isin(masks, (0.0, 1.0)).all():
                raise ValueError("shutter masks must be binary")
            total = masks.sum(axis=0)
            if not np.array_equal(total, np.ones_like(total)):
                raise ValueError("shutter masks must read every pixel exactly once")
        self.masks = masks
        self.kind = kind

    @property
    def K(self):
        return self.masks.shape[0]

    @property
    def sensor_shape(self):
        return self.masks.shape[1:]


class ForwardModel:
    """Bundles PSF, mask stack, and crop geometry into one linear operator."""

    def __init__(self, psf, masks):
        if not isinstance(psf, Psf):
            psf = Psf(psf)
        if not isinstance(masks, MaskStack):
            masks = MaskStack(masks)
        if psf.shape != masks.sensor_shape:
            raise ValueError(
                f"PSF extent {psf.shape} != mask extent {masks.sensor_shape}")
        self.psf = psf
        self.masks = masks
        H, W = psf.shape
        self.sensor_shape = (H, W)
        self.scene_shape = (masks.K, H, W)
        self._pad_shape = (2 * H, 2 * W)
        # align the PSF center pixel with the origin of the padded grid so
        # that a centered delta kernel is exactly the identity after crop
        hp = pad_center(psf.image, self._pad_shape)
        oy, ox = (2 * H - H) // 2, (2 * W - W) // 2
        hp = np.roll(hp, (-(oy + H // 2), -(ox + W // 2)), axis=(0, 1))
        self._kernel_f = np.fft.rfft2(hp).astype(precision.get_complex_dtype())

    # -- internal padded-FFT convolution shared by every public path --

    def _conv_slices(self, cube):
        """crop(conv(v_k, h)) for each slice of a (K, H, W) cube."""
        K, H, W = cube.shape
        H2, W2 = self._pad_shape
        padded = np.zeros((K, H2, W2), dtype=cube.dtype)
        oy, ox = (H2 - H) // 2, (W2 - W) // 2
        padded[:, oy:oy + H, ox:ox + W] = cube
        out = np.fft.irfft2(np.fft.rfft2(padded) * self._kernel_f, s=(H2, W2))
        return out[:, oy:oy + H, ox:ox + W].astype(cube.dtype)

    def _corr_slices(self, cube):
        """Transpose of :meth:`_conv_slices` (flipped-kernel convolution)."""
        K, H, W = cube.shape
        H2, W2 = self._pad_shape
        padded = np.zeros((K, H2, W2), dtype=cube.dtype)
        oy, ox = (H2 - H) // 2, (W2 - W) // 2
        padded[:, oy:oy + H, ox:ox + W] = cube
        out = np.fft.irfft2(np.fft.rfft2(padded) * np.conj(self._kernel_f), s=(H2, W2))
        return out[:, oy:oy + H, ox:ox + W].astype(cube.dtype)

    # -- public operator surface --

    def apply(self, v):
        """A v: scene cube ``(K, H, W)`` to sensor image ``(H, W)``."""
        v = precision.asfloat(v)
        if v.shape != self.scene_shape:
            raise ValueError(f"scene shape {v.shape} != {self.scene_shape}")
        return (self.masks.masks * self._conv_slices(v)).sum(axis=0)

    def adjoint(self, b):
        """A^T b: sensor image ``(H, W)`` back to a scene-shaped cube."""
        b = precision.asfloat(b)
        if b.shape != self.sensor_shape:
            raise ValueError(f"sensor shape {b.shape} != {self.sensor_shape}")
        return self._corr_slices(self.masks.masks * b[None])


def convolve_psf(v, psf):
    """Linear convolution of a 2D scene with the PSF on the centered window."""
    v = precision.asfloat(v)
    if not isinstance(psf, Psf):
        psf = Psf(psf)
    if v.shape != psf.shape:
        raise ValueError(f"scene extent {v.shape} != PSF extent {psf.shape}")
    ones = MaskStack(np.ones((1,) + psf.shape, dtype=precision.get_dtype()), "custom")
    return ForwardModel(psf, ones)._conv_slices(v[None])[0]
