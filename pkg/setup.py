import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("KPOLAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [Extension("kpolab._kernels", ["src/kpolab/_kernels.pyx"],
                       include_dirs=[np.get_include()],
                       define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")])],
            language_level=3,
        )

setup(ext_modules=ext_modules)
