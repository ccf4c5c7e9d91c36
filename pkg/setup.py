"""Builds the optional compiled kernels; the package works without them."""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("REISTOKES_NO_EXT", "") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [Extension("reistokes._kernels", ["src/reistokes/_kernels.pyx"],
                       include_dirs=[numpy.get_include()],
                       extra_compile_args=["-O3"])],
            language_level=3,
        )
    except Exception as exc:  # build tools missing: fall back to numpy kernels
        print(f"compiled kernels disabled: {exc}")

setup(ext_modules=ext_modules)
