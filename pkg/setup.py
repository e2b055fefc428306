"""Builds the optional native kernel extension.

The package works without it: surface_sync.kernels falls back to the pure
Python implementation when the extension is absent or fails to build.
"""

from setuptools import setup

try:
    import numpy
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    ext_modules = cythonize(
        [
            Extension(
                "surface_sync.kernels._native",
                sources=["src/surface_sync/kernels/_native.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
