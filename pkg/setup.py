"""Builds the compiled kernel extension.

The package works without it (the pure-NumPy backend takes over at
import), so a missing compiler only costs speed:
    python setup.py build_ext --inplace
or just `pip install -e . --no-build-isolation`.
"""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "dfcn._kernels",
                ["src/dfcn/_kernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
