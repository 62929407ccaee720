"""Conv kernel dispatch between the two interchangeable backends.

``_reference`` is numpy im2col feeding BLAS GEMMs; ``_fastconv`` is a
compiled direct convolution (Cython + OpenMP).  Benchmarks on this
hardware (see benchmarks/bench_kernels.py) put the BLAS-backed path well
ahead at every generator workload, so it is the default; set
``UDNKIT_KERNELS=ext`` to select the compiled extension instead (it must
be built), or ``UDNKIT_KERNELS=python`` to pin the default explicitly.
Both backends are held to the same brute-force oracle and parity tests.
"""
import os

import numpy as np

from . import _reference

_choice = os.environ.get("UDNKIT_KERNELS", "python")
if _choice not in ("ext", "python"):
    raise RuntimeError(f"UDNKIT_KERNELS must be ext or python, got {_choice!r}")

_ext = None
try:
    from . import _fastconv as _ext
except ImportError:
    if _choice == "ext":
        raise

HAVE_EXTENSION = _ext is not None
BACKEND = _choice


def backend_for(dtype):
    """The compiled backend handles float32/float64; anything else falls back."""
    if BACKEND == "ext" and _ext is not None and \
            np.dtype(dtype) in (np.dtype(np.float32), np.dtype(np.float64)):
        return _ext
    return _reference


def conv2d_forward(x, w, bias=None, stride=1):
    x = np.ascontiguousarray(x)
    w = np.ascontiguousarray(w, dtype=x.dtype)
    if bias is not None:
        bias = np.ascontiguousarray(bias, dtype=x.dtype)
    return backend_for(x.dtype).conv2d_forward(x, w, bias, stride)


def conv2d_backward_input(gy, w, stride, in_shape):
    gy = np.ascontiguousarray(gy)
    w = np.ascontiguousarray(w, dtype=gy.dtype)
    return backend_for(gy.dtype).conv2d_backward_input(gy, w, stride, tuple(in_shape))


def conv2d_backward_weights(gy, x, stride, kernel_shape):
    gy = np.ascontiguousarray(gy)
    x = np.ascontiguousarray(x, dtype=gy.dtype)
    return backend_for(gy.dtype).conv2d_backward_weights(gy, x, stride,
                                                         tuple(kernel_shape))
