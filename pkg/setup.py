import os

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:  # build without the compiled core; the numpy fallback takes over
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "lowrank_gw._core._kernels",
                ["src/lowrank_gw/_core/_kernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"] if os.name != "nt" else [],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
