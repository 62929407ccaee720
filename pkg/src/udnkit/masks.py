"""Generators for the three sensor-weighting mask families.

Randomized masks use numpy's counter-based Philox4x32-10 generator keyed
directly by the caller's seed, so a mask is reproducible from
``(seed, H, W, parameters)`` alone, independent of platform or call order.
"""
import numpy as np

from . import precision
from .core import require_finite
from .forward_model import MaskStack


def _philox(seed):
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))


def make_erasure_mask(H, W, erase_fraction, seed=0):
    """Binary K=1 mask zeroing ``round(erase_fraction * H * W)`` random pixels.

    Erased positions are a uniform without-replacement draw (the first
    entries of a Philox-seeded permutation of the flat index range).
    """
    if not 0.0 <= erase_fraction <= 1.0:
        raise ValueError(f"erase_fraction {erase_fraction} outside [0, 1]")
    n_zero = int(np.floor(erase_fraction * H * W + 0.5))
    flat = np.ones(H * W, dtype=precision.get_dtype())
    if n_zero:
        idx = _philox(seed).permutation(H * W)[:n_zero]
        flat[idx] = 0.0
    return MaskStack(flat.reshape(1, H, W), "erasure")


def make_shutter_masks(H, W, lines_per_frame, mode="dual"):
    """Rolling-shutter masks: each frame k reads a band of sensor rows.

    single: frame k covers rows ``[k*r, (k+1)*r)`` top to bottom, K = H/r.
    dual:   frame k covers that band plus its mirror from the bottom,
            the two lines meeting in the middle, K = H/(2r).

    Every row is read exactly once, so the masks partition the sensor.
    """
    r = int(lines_per_frame)
    if r < 1:
        raise ValueError("lines_per_frame must be a positive integer")
    if mode == "single":
        if H % r:
            raise ValueError(
                f"single shutter needs H divisible by lines_per_frame; "
                f"got H={H}, lines_per_frame={r}")
        K = H // r
    elif mode == "dual":
        if H % (2 * r):
            raise ValueError(
                f"dual shutter needs H divisible by 2*lines_per_frame; "
                f"got H={H}, lines_per_frame={r}")
        K = H // (2 * r)
    else:
        raise ValueError(f"unknown shutter mode {mode!r}")

    masks = np.zeros((K, H, W), dtype=precision.get_dtype())
    for k in range(K):
        masks[k, k * r:(k + 1) * r, :] = 1.0
        if mode == "dual":
            masks[k, H - (k + 1) * r:H - k * r, :] = 1.0
    return MaskStack(masks, f"shutter-{mode}")


def make_filter_masks(H, W, K, superpixel, response=None):
    """Spectral filter-array masks from a tiled superpixel layout.

    The ``superpixel = (sh, sw)`` cell is tiled over the sensor; cell
    position ``(i, j)`` holds filter ``p = i*sw + j``, assigned to channel
    ``p % K`` (raster order).  ``response`` is an optional
    ``(sh*sw, K)`` array of per-filter in-band weights in [0, 1]; the
    default is the ideal indicator response (filter p passes only its own
    channel).  Fully measured filter functions bypass synthesis: wrap the
    ``(K, H, W)`` array in ``MaskStack(arr, "spectral-filter")`` directly.
    """
    sh, sw = superpixel
    if sh * sw < K:
        raise ValueError(f"superpixel {superpixel} holds {sh * sw} filters < K={K}")
    if H % sh or W % sw:
        raise ValueError(f"sensor {(H, W)} not divisible by superpixel {superpixel}")

    n_filters = sh * sw
    if response is None:
        response = np.zeros((n_filters, K))
        response[np.arange(n_filters), np.arange(n_filters) % K] = 1.0
    response = precision.asfloat(response)
    if response.shape != (n_filters, K):
        raise ValueError(
            f"response shape {response.shape} != ({n_filters}, {K})")
    require_finite(response, "filter response")
    if response.min() < 0 or response.max() > 1:
        raise ValueError("filter responses must lie in [0, 1]")

    rows = np.arange(H) % sh
    cols = np.arange(W) % sw
    filter_index = rows[:, None] * sw + cols[None, :]
    masks = response[filter_index]                    # (H, W, K)
    return MaskStack(np.moveaxis(masks, -1, 0).copy(), "spectral-filter")
