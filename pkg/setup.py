"""Build script for the optional compiled core.

The package is fully functional without the extension (a NumPy fallback is
selected at import time); the extension only accelerates the hot
trajectory-rollout loops.  Set ORBITMC_SKIP_EXT=1 to install pure-Python.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("ORBITMC_SKIP_EXT"):
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "orbitmc._core",
                ["src/orbitmc/_core.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
