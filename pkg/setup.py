import os
import sys

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

openmp = [] if sys.platform == "darwin" or os.environ.get("CHOQUARD_NO_OPENMP") else ["-fopenmp"]

extensions = []
if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "choquard_lattice._kernels",
                ["src/choquard_lattice/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"] + openmp,
                extra_link_args=openmp,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=extensions)
