"""Binary tensor container and image ingestion.

Container layout (all little-endian)::

    magic   4 bytes  b"UDNT"
    version 1 byte   (currently 1)
    dtype   1 byte   0 = float32, 1 = float64
    rank    1 byte
    extents rank x u32
    payload raw row-major values

PNG ingestion accepts 8- and 16-bit grayscale images rescaled to [0, 1];
color inputs are averaged to grayscale first.
"""
import struct

import numpy as np
from PIL import Image

from .core import require_finite

MAGIC = b"UDNT"
VERSION = 1
_DTYPE_CODES = {0: np.float32, 1: np.float64}
_CODE_FOR = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def write_tensor(path, arr):
    """Write a float32/float64 array to the UDNT container format."""
    arr = np.ascontiguousarray(arr)
    if arr.dtype not in _CODE_FOR:
        raise ValueError(f"unsupported dtype {arr.dtype}; use float32 or float64")
    require_finite(arr, "tensor payload")
    if arr.ndim == 0 or any(e <= 0 for e in arr.shape):
        raise ValueError(f"invalid tensor shape {arr.shape}")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<BBB", VERSION, _CODE_FOR[arr.dtype], arr.ndim))
        f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        f.write(arr.astype(arr.dtype.newbyteorder("<")).tobytes())


def read_tensor(path):
    """Read a UDNT container back into a numpy array."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic {raw[:4]!r}, not a UDNT container")
    version, dtype_code, rank = struct.unpack_from("<BBB", raw, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported container version {version}")
    if dtype_code not in _DTYPE_CODES:
        raise ValueError(f"{path}: unknown dtype code {dtype_code}")
    extents = struct.unpack_from(f"<{rank}I", raw, 7)
    dtype = np.dtype(_DTYPE_CODES[dtype_code]).newbyteorder("<")
    offset = 7 + 4 * rank
    count = int(np.prod(extents))
    arr = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
    arr = arr.reshape(extents).astype(_DTYPE_CODES[dtype_code])
    return require_finite(arr, f"{path} payload")


def read_image(path):
    """Load an 8/16-bit PNG (or any PIL-readable image) as floats in [0, 1]."""
    img = Image.open(path)
    if img.mode in ("I", "I;16", "I;16B"):
        arr = np.asarray(img, dtype=np.float64) / 65535.0
    else:
        if img.mode not in ("L", "F"):
            img = img.convert("L")
        arr = np.asarray(img, dtype=np.float64)
        if img.mode == "L":
            arr = arr / 255.0
    if arr.ndim != 2:
        arr = arr.mean(axis=-1)
    return require_finite(np.clip(arr, 0.0, 1.0), f"{path} pixels")


def load_array(path):
    """Dispatch on suffix: .udnt containers or image files."""
    p = str(path)
    if p.endswith(".udnt"):
        return read_tensor(p)
    return read_image(p)
