"""Build script: compiles the optional Cython trajectory kernel.

The package is fully functional without the extension (a pure-numpy
kernel is selected at import time); the build therefore degrades
gracefully when no compiler toolchain is available.
"""

import os

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    # the kernel calls numpy's C distribution functions, which live in a
    # static helper library shipped inside the numpy package
    npyrandom_dir = os.path.join(os.path.dirname(numpy.random.__file__), "lib")
    ext_modules = cythonize(
        [
            Extension(
                "heraldsqueeze._kernels_cy",
                sources=["src/heraldsqueeze/_kernels_cy.pyx"],
                include_dirs=[numpy.get_include()],
                library_dirs=[npyrandom_dir],
                libraries=["npyrandom"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - toolchain-dependent
    print(f"warning: building without compiled kernel ({exc})")

setup(ext_modules=ext_modules)
