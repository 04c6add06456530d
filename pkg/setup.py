"""Builds the optional compiled kernel extension.

The package works without it: skinret.backend falls back to the numpy
kernels when `skinret._kernels` is missing (see benchmarks/bench_kernels.py
for the speed difference).
"""

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "skinret._kernels",
                sources=["src/skinret/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level="3",
    )
else:
    extensions = []

setup(ext_modules=extensions)
