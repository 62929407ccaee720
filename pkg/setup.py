"""Build script: compiles the optional conv-kernel extension.

The package works without the extension (a numpy fallback is selected at
import time); pass UDNKIT_NO_EXT=1 to skip compilation entirely.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("UDNKIT_NO_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "udnkit.kernels._fastconv",
                    ["src/udnkit/kernels/_fastconv.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3", "-fopenmp"],
                    extra_link_args=["-fopenmp"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
