"""Build script for the optional compiled stencil core.

The pure-Python fallback in ``riccilab._kernels._pykernels`` is used when the
extension is missing, so a failed compile is not fatal.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("RICCILAB_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "riccilab._kernels._ckernels",
                    ["src/riccilab/_kernels/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
                "initializedcheck": False,
            },
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
