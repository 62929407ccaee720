"""Reconstruction toolkit for mask-based compressive lensless imaging.

Subpackages are imported lazily so the command-line entry point can pin
threading environment variables before numpy comes up.
"""

__version__ = "0.1.0"

_EXPORTS = {
    "precision": ".precision",
    "core": ".core",
    "tensorio": ".tensorio",
    "forward_model": ".forward_model",
    "masks": ".masks",
    "solvers": ".solvers",
    "kernels": ".kernels",
    "autodiff": ".autodiff",
    "udn": ".udn",
    "metrics": ".metrics",
    "synth": ".synth",
    "experiments": ".experiments",
}


def __getattr__(name):
    if name in _EXPORTS:
        import importlib

        module = importlib.import_module(_EXPORTS[name], __name__)
        globals()[name] = module
        return module
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
