"""Build script.

The compiled convolution kernels are optional: when Cython (and a C
compiler) are available the `dagf._native` extension is built, otherwise
the package installs anyway and falls back to the numpy kernels at import
time.  Build in place for development with:

    python setup.py build_ext --inplace
"""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        "src/dagf/_native.pyx",
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
    for ext in ext_modules:
        ext.optional = True
        ext.extra_compile_args = ["-O3"]
except ImportError:
    pass

setup(ext_modules=ext_modules)
