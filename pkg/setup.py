"""Build script: compiles the optional fast-kernel extension when Cython is present.

The package is fully functional without the extension; layoutpref._kernels
falls back to the pure numpy implementation at import time.
"""

from setuptools import Extension, setup

extensions = []
try:
    import numpy as np
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "layoutpref._kernels._core",
                ["src/layoutpref/_kernels/_core.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    pass

setup(ext_modules=extensions)
