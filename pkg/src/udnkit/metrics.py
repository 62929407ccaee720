"""Image- and spectrum-quality metrics for comparing reconstructions.

SSIM uses the canonical 11x11 Gaussian window (sigma 1.5) and stabilizers
(0.01*peak)^2 / (0.03*peak)^2; MS-SSIM uses five dyadic scales with the
canonical weights.  The learned perceptual metrics are out of scope here,
but the report schema reserves their field names so externally computed
values can be merged into the same tables.
"""
import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import convolve2d

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
MSSSIM_MIN_SIZE = SSIM_WINDOW * 2 ** (len(MSSSIM_WEIGHTS) - 1)   # 176


def mse(a, b):
    a, b = np.asarray(a, np.float64), np.asarray(b, np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def psnr(a, b, peak=1.0):
    m = mse(a, b)
    if m == 0.0:
        return float("inf")
    return float(10.0 * np.log10(peak * peak / m))


def _gaussian_window():
    half = SSIM_WINDOW // 2
    g = np.exp(-0.5 * (np.arange(-half, half + 1) / SSIM_SIGMA) ** 2)
    w = np.outer(g, g)
    return w / w.sum()


_WINDOW = _gaussian_window()


def _ssim_maps(a, b, peak):
    """Luminance*contrast-structure map and contrast-structure map."""
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    C1 = (SSIM_K1 * peak) ** 2
    C2 = (SSIM_K2 * peak) ** 2
    mu1 = convolve2d(a, _WINDOW, mode="valid")
    mu2 = convolve2d(b, _WINDOW, mode="valid")
    s11 = convolve2d(a * a, _WINDOW, mode="valid") - mu1 * mu1
    s22 = convolve2d(b * b, _WINDOW, mode="valid") - mu2 * mu2
    s12 = convolve2d(a * b, _WINDOW, mode="valid") - mu1 * mu2
    lum = (2 * mu1 * mu2 + C1) / (mu1 * mu1 + mu2 * mu2 + C1)
    cs = (2 * s12 + C2) / (s11 + s22 + C2)
    return lum * cs, cs


def ssim(a, b, peak=1.0):
    """Structural similarity of two 2D images (mean over the valid map)."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if min(a.shape) < SSIM_WINDOW:
        raise ValueError(
            f"image extent {a.shape} below the SSIM minimum of "
            f"{SSIM_WINDOW}x{SSIM_WINDOW}")
    full, _ = _ssim_maps(a, b, peak)
    return float(full.mean())


def _halve(x):
    """2x2 average pooling (trailing odd row/column dropped)."""
    H, W = x.shape
    x = x[:H - H % 2, :W - W % 2]
    return x.reshape(H // 2, 2, W // 2, 2).mean(axis=(1, 3))


def ms_ssim(a, b, peak=1.0):
    """Multi-scale SSIM over five dyadic scales, canonical weights."""
    a, b = np.asarray(a, np.float64), np.asarray(b, np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if min(a.shape) < MSSSIM_MIN_SIZE:
        raise ValueError(
            f"image extent {a.shape} below the MS-SSIM minimum of "
            f"{MSSSIM_MIN_SIZE}x{MSSSIM_MIN_SIZE} (five dyadic scales with "
            f"an {SSIM_WINDOW}-tap window)")
    out = 1.0
    for level, weight in enumerate(MSSSIM_WEIGHTS):
        full, cs = _ssim_maps(a, b, peak)
        last = level == len(MSSSIM_WEIGHTS) - 1
        term = float(full.mean()) if last else float(cs.mean())
        out *= max(term, 0.0) ** weight
        if not last:
            a, b = _halve(a), _halve(b)
    return float(out)


def spectral_cosine_distance(est, gt, mask=None):
    """Mean of 1 - cosine similarity between per-pixel spectra.

    ``mask`` selects foreground pixels; by default every pixel whose
    ground-truth spectrum is not all-zero.  Estimate spectra with zero
    norm contribute the maximal distance of 1.
    """
    est = np.asarray(est, np.float64)
    gt = np.asarray(gt, np.float64)
    if est.shape != gt.shape:
        raise ValueError(f"shape mismatch {est.shape} vs {gt.shape}")
    if est.ndim != 3:
        raise ValueError("expected (K, H, W) cubes")
    gt_norm = np.linalg.norm(gt, axis=0)
    if mask is None:
        mask = gt_norm > 0
    else:
        mask = np.asarray(mask, bool) & (gt_norm > 0)
    if not mask.any():
        raise ValueError("foreground mask selects no pixels")
    e = est[:, mask]
    g = gt[:, mask]
    en = np.linalg.norm(e, axis=0)
    gn = gt_norm[mask]
    sim = np.zeros(e.shape[1])
    ok = en > 0
    sim[ok] = np.sum(e[:, ok] * g[:, ok], axis=0) / (en[ok] * gn[ok])
    return float(np.mean(1.0 - sim))


@dataclass
class MetricReport:
    """Per-slice metric curves plus aggregates for one reconstruction."""

    mse: float
    psnr: float
    ssim: float
    ms_ssim: float = None                      # None when below min size
    spectral_cosine_distance: float = None     # hyperspectral only
    lpips_alex: float = None                   # reserved for merged values
    lpips_vgg: float = None
    per_slice: dict = field(default_factory=dict)
    constants: dict = field(default_factory=lambda: {
        "ssim_window": SSIM_WINDOW, "ssim_sigma": SSIM_SIGMA,
        "ssim_k1": SSIM_K1, "ssim_k2": SSIM_K2,
        "msssim_weights": MSSSIM_WEIGHTS,
    })

    AGGREGATE_FIELDS = ("mse", "psnr", "ssim", "ms_ssim",
                        "spectral_cosine_distance", "lpips_alex", "lpips_vgg")

    def save_csv(self, path):
        K = len(self.per_slice.get("mse", []))
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["slice"] + list(self.AGGREGATE_FIELDS))
            for k in range(K):
                w.writerow([k] + [self._fmt(self.per_slice.get(name, [None] * K)[k])
                                  for name in self.AGGREGATE_FIELDS])
            w.writerow(["aggregate"] + [self._fmt(getattr(self, name))
                                        for name in self.AGGREGATE_FIELDS])

    def save_text(self, path):
        with open(path, "w") as f:
            f.write("metric report\n=============\n")
            for name in self.AGGREGATE_FIELDS:
                f.write(f"{name}: {self._fmt(getattr(self, name))}\n")
            f.write(f"constants: {self.constants}\n")
            for name, values in self.per_slice.items():
                f.write(f"per-slice {name}: "
                        + " ".join(self._fmt(v) for v in values) + "\n")

    @staticmethod
    def _fmt(v):
        return "" if v is None else repr(float(v))


def compute_metrics(est, gt, peak=1.0):
    """Full MetricReport for an estimate/ground-truth cube pair."""
    est = np.asarray(est)
    gt = np.asarray(gt)
    if est.ndim == 2:
        est, gt = est[None], gt[None]
    if est.shape != gt.shape:
        raise ValueError(f"shape mismatch {est.shape} vs {gt.shape}")
    K, H, W = gt.shape
    size_ok = min(H, W) >= MSSSIM_MIN_SIZE
    per = {
        "mse": [mse(est[k], gt[k]) for k in range(K)],
        "psnr": [psnr(est[k], gt[k], peak) for k in range(K)],
        "ssim": [ssim(est[k], gt[k], peak) for k in range(K)],
    }
    if size_ok:
        per["ms_ssim"] = [ms_ssim(est[k], gt[k], peak) for k in range(K)]
    return MetricReport(
        mse=mse(est, gt),
        psnr=psnr(est, gt, peak),
        ssim=float(np.mean(per["ssim"])),
        ms_ssim=float(np.mean(per["ms_ssim"])) if size_ok else None,
        spectral_cosine_distance=(spectral_cosine_distance(est, gt)
                                  if K > 1 else None),
        per_slice=per,
    )
