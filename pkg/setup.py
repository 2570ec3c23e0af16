import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # numpy fallback only
    cythonize = None

ext_modules = []
if cythonize is not None and os.environ.get("ADALIGNER_NO_EXT", "") in ("", "0"):
    ext_modules = cythonize(
        [
            Extension(
                "adaligner.kernels._fast",
                ["src/adaligner/kernels/_fast.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
