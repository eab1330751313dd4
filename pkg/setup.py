"""Build script for the optional compiled kernel extension.

The package works without the extension (numpy fallback kernels are
selected at import time), so a missing compiler or Cython only costs
speed, never functionality.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "cacaodx.kernels.ckernels",
                ["src/cacaodx/kernels/ckernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3", "-march=native", "-fopenmp"],
                extra_link_args=["-fopenmp"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level="3",
    )

setup(ext_modules=ext_modules)
