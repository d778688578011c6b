"""Build script for the optional compiled kernel core.

The compiled extension is a performance feature, not a requirement: if
Cython (or a C compiler) is unavailable the package installs without it
and falls back to the pure NumPy kernels at import time.

Strict floating-point flags are deliberate. The kernels promise a fixed
accumulation order, and fused multiply-add contraction would silently
change results relative to the pure-Python backend.
"""

from setuptools import Extension, setup


def extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        print("Cython not available; building without the compiled kernel core")
        return []
    ext = Extension(
        "galikit._core",
        ["src/galikit/_core.pyx"],
        extra_compile_args=["-O3", "-ffp-contract=off", "-fno-fast-math"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions())
