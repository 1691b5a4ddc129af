from setuptools import Extension, setup

import numpy as np
from Cython.Build import cythonize

# The compiled kernel core is optional at runtime (the package falls back to
# the numpy implementation if the import fails) but is built by default.
extensions = [
    Extension(
        "abelnet._kernels._core",
        ["src/abelnet/_kernels/_core.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
