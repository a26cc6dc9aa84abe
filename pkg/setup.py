import os

import numpy as np
from setuptools import Extension, setup

# Set L1INDEP_NO_EXT=1 to install without the compiled core; the package then
# runs on its NumPy fallback.
ext_modules = []
if not os.environ.get("L1INDEP_NO_EXT"):
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "l1indep._kernels",
                ["src/l1indep/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
