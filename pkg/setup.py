"""Build the optional compiled kernels.

The package works without them; ``predsens.kernels`` falls back to the
pure-Python implementation when the extension is missing.
"""
import os
import warnings

from setuptools import setup

ext_modules = []
if os.environ.get("PREDSENS_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext = Extension(
            "predsens.kernels._core",
            ["src/predsens/kernels/_core.pyx"],
            include_dirs=[np.get_include()],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            extra_compile_args=["-O3"],
            language="c++",
        )
        ext_modules = cythonize(
            [ext],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
                "initializedcheck": False,
            },
        )
    except ImportError:
        warnings.warn("Cython/numpy unavailable: installing the pure-Python kernels only")

setup(ext_modules=ext_modules)
