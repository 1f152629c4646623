"""Build the optional Cython kernel extension.

Set BTKIT_SKIP_EXT=1 to install without the compiled kernels; the package
then runs on the pure-Python fallback in btkit._kernels._ref.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("BTKIT_SKIP_EXT", "0") != "1":
    try:
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "btkit._kernels._fast",
                    sources=["src/btkit/_kernels/_fast.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
                "language_level": "3",
            },
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
