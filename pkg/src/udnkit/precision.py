"""Global compute-precision switch.

Everything numeric runs in 32-bit by default (speed); verification and
determinism checks run in 64-bit by flipping the switch, either globally
with :func:`set_precision` or locally with the :func:`precision` context
manager.
"""
from contextlib import contextmanager

import numpy as np

_NAMES = {"f32": np.float32, "f64": np.float64}
_COMPLEX = {np.float32: np.complex64, np.float64: np.complex128}

_current = np.float32


def set_precision(name):
    """Set the global float dtype; ``name`` is 'f32' or 'f64'."""
    global _current
    if name not in _NAMES:
        raise ValueError(f"unknown precision {name!r}, expected 'f32' or 'f64'")
    _current = _NAMES[name]


def get_dtype():
    """Current real dtype (numpy type object)."""
    return _current


def get_complex_dtype():
    """Complex dtype matching the current real dtype."""
    return _COMPLEX[_current]


def precision_name():
    return "f32" if _current is np.float32 else "f64"


def real_tolerance():
    """Baseline relative tolerance for round-trip checks at the current precision."""
    return 1e-6 if _current is np.float32 else 1e-12


@contextmanager
def precision(name):
    """Temporarily switch precision inside a ``with`` block."""
    prev = precision_name()
    set_precision(name)
    try:
        yield
    finally:
        set_precision(prev)


def asfloat(a):
    """Cast ``a`` to the current real dtype (no copy when already right)."""
    return np.asarray(a, dtype=_current)
