"""Build the optional Cython kernels.

If Cython or a C compiler is missing the package still installs and falls
back to the numpy implementations in ``duetreact._kernels._fallback``.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("DUETREACT_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "duetreact._kernels._ckernels",
                    ["src/duetreact/_kernels/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
