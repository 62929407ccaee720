"""Synthetic PSFs and scenes so every experiment runs with zero external data.

The caustic generator refracts an oversampled ray grid through a smooth
seeded pseudorandom phase screen and accumulates ray density on the
sensor, the same mechanism that gives a real diffuser its high-contrast
filament pattern.  ``contrast`` scales the effective propagation
distance: higher values fold more rays into sharper caustics.
"""
import numpy as np
from scipy import ndimage

from . import precision
from .forward_model import Psf


def _philox(seed):
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))


def synth_caustic_psf(H, W, seed=0, contrast=1.5, smoothness=2.0, oversample=4):
    """Pseudorandom caustic PSF from a smooth phase screen, unit L2 norm.

    Returns a :class:`Psf`.  The autocorrelation peak-to-sidelobe ratio of
    the pattern exceeds 3 for the default parameters (a proxy for the
    measurement incoherence the diffuser provides).
    """
    if H < 8 or W < 8:
        raise ValueError(f"degenerate PSF extent {(H, W)}")
    if contrast <= 0:
        raise ValueError("contrast must be > 0")
    rng = _philox(seed)
    phi = ndimage.gaussian_filter(rng.standard_normal((H, W)), smoothness, mode="wrap")
    phi = (phi - phi.mean()) / phi.std()
    gy, gx = np.gradient(phi)

    n = int(oversample)
    ys = (np.arange(H * n) + 0.5) / n - 0.5
    xs = (np.arange(W * n) + 0.5) / n - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")

    def bilinear(f, y, x):
        y0 = np.floor(y).astype(int)
        x0 = np.floor(x).astype(int)
        fy, fx = y - y0, x - x0
        y0 %= H
        x0 %= W
        y1, x1 = (y0 + 1) % H, (x0 + 1) % W
        return (f[y0, x0] * (1 - fy) * (1 - fx) + f[y1, x0] * fy * (1 - fx)
                + f[y0, x1] * (1 - fy) * fx + f[y1, x1] * fy * fx)

    t = contrast * smoothness ** 2
    py = yy + t * bilinear(gy, yy, xx)
    px = xx + t * bilinear(gx, yy, xx)

    img = np.zeros((H, W))
    y0 = np.floor(py).astype(int)
    x0 = np.floor(px).astype(int)
    fy, fx = py - y0, px - x0
    y0 %= H
    x0 %= W
    y1, x1 = (y0 + 1) % H, (x0 + 1) % W
    np.add.at(img, (y0, x0), (1 - fy) * (1 - fx))
    np.add.at(img, (y1, x0), fy * (1 - fx))
    np.add.at(img, (y0, x1), (1 - fy) * fx)
    np.add.at(img, (y1, x1), fy * fx)
    return Psf(img)


def autocorr_psr(pattern, exclude_radius=8):
    """Peak-to-sidelobe ratio of the mean-removed linear autocorrelation.

    Sidelobes are lags farther than ``exclude_radius`` pixels from zero.
    """
    x = np.asarray(pattern, dtype=np.float64)
    x = x - x.mean()
    H, W = x.shape
    F = np.fft.fft2(x, s=(2 * H, 2 * W))
    ac = np.fft.fftshift(np.fft.ifft2(np.abs(F) ** 2).real)
    peak = ac[H, W]
    yy, xx = np.mgrid[0:2 * H, 0:2 * W]
    outside = (yy - H) ** 2 + (xx - W) ** 2 > exclude_radius ** 2
    return float(peak / np.abs(ac[outside]).max())


# ---------------------------------------------------------------------------
# scene generators, addressed by id from experiment specs
# ---------------------------------------------------------------------------

def scene_blobs(H, W, seed=0, n_blobs=6):
    """Smooth 2D test scene: soft blobs on a gentle gradient, in [0, 1]."""
    rng = _philox(seed)
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    img = 0.15 + 0.1 * (xx / W)
    for _ in range(n_blobs):
        cy, cx = rng.random(2) * [H, W]
        s = 2.0 + 4.0 * rng.random()
        a = 0.3 + 0.7 * rng.random()
        img += a * np.exp(-(((yy - cy) / s) ** 2 + ((xx - cx) / s) ** 2))
    return np.clip(img / img.max(), 0.0, 1.0)


def scene_photo(H, W, name="camera"):
    """Natural photograph from scikit-image's bundled set (grayscale,
    center-cropped square, block-mean downsampled to (H, W))."""
    from skimage import data

    img = getattr(data, name)().astype(np.float64)
    if img.ndim == 3:
        img = img @ [0.2126, 0.7152, 0.0722]        # Rec. 709 luma
    img = img / img.max()
    f = max(min(img.shape[0] // H, img.shape[1] // W), 1)
    oy = (img.shape[0] - H * f) // 2
    ox = (img.shape[1] - W * f) // 2
    img = img[oy:oy + H * f, ox:ox + W * f]
    img = img.reshape(H, f, W, f).mean(axis=(1, 3))
    return np.clip(img, 0.0, 1.0)


def scene_moving_square(H, W, K, seed=0, size=None):
    """Video cube: a bright square translating diagonally over K frames."""
    rng = _philox(seed)
    size = size or max(H // 4, 2)
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    base = 0.08 + 0.06 * (yy / H)
    cube = np.zeros((K, H, W))
    y_start, x_start = int(rng.integers(0, max(H - size - K, 1))), 1
    step = max((W - size - 2) / max(K - 1, 1), 0.0)
    for k in range(K):
        frame = base.copy()
        y0 = y_start + k * step * 0.5
        x0 = x_start + k * step
        frame += 0.85 * ((yy >= y0) & (yy < y0 + size)
                         & (xx >= x0) & (xx < x0 + size))
        cube[k] = np.clip(frame, 0.0, 1.0)
    return cube


def scene_spectral_blobs(H, W, K, seed=0, n_blobs=4):
    """Hyperspectral cube: blobs with smooth Gaussian spectra, zero background."""
    rng = _philox(seed)
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    bands = np.arange(K, dtype=np.float64)
    cube = np.zeros((K, H, W))
    for _ in range(n_blobs):
        cy, cx = rng.random(2) * [H, W]
        s = H / 8.0 + rng.random() * H / 5.0
        spatial = np.exp(-(((yy - cy) / s) ** 2 + ((xx - cx) / s) ** 2))
        center = rng.random() * (K - 1)
        width = 0.6 + 1.8 * rng.random()
        spectrum = np.exp(-0.5 * ((bands - center) / width) ** 2)
        cube += (0.4 + 0.6 * rng.random()) * spectrum[:, None, None] * spatial
    cube[cube < 0.02] = 0.0
    m = cube.max()
    return np.clip(cube / m, 0.0, 1.0) if m > 0 else cube


SCENE_GENERATORS = {
    "blobs": scene_blobs,
    "photo": scene_photo,
    "camera": scene_photo,          # back-compat alias for the default photo
    "moving-square": scene_moving_square,
    "spectral-blobs": scene_spectral_blobs,
}


def make_scene(generator, H, W, K=1, seed=0, **params):
    """Build a (K, H, W) cube from a named generator."""
    if generator not in SCENE_GENERATORS:
        raise ValueError(f"unknown scene generator {generator!r}; "
                         f"known: {sorted(SCENE_GENERATORS)}")
    fn = SCENE_GENERATORS[generator]
    if generator in ("moving-square", "spectral-blobs"):
        cube = fn(H, W, K, seed=seed, **params)
    elif generator in ("photo", "camera"):
        cube = fn(H, W, **params)[None]
    else:
        cube = fn(H, W, seed=seed, **params)[None]
    if cube.shape != (K, H, W):
        raise ValueError(f"generator {generator!r} produced {cube.shape}, "
                         f"expected {(K, H, W)}")
    return precision.asfloat(cube)
