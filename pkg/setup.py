import os

from setuptools import setup

# The compiled kernels are optional: the package falls back to the numpy
# implementations in crosscam._kernels.pure when the extension is absent.
ext_modules = []
if not os.environ.get("CROSSCAM_SKIP_NATIVE"):
    try:
        from Cython.Build import cythonize
        from setuptools.extension import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "crosscam._kernels._native",
                    ["src/crosscam/_kernels/_native.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            language_level="3",
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
