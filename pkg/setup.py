"""Build the optional compiled training kernel.

The package runs without it: ``mpe_lab.nn`` falls back to the numpy kernel
when the extension is missing.  Set ``MPE_LAB_NO_EXT=1`` to skip the build.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("MPE_LAB_NO_EXT"):
    try:
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [Extension("mpe_lab.nn._kernels", ["src/mpe_lab/nn/_kernels.pyx"],
                       extra_compile_args=["-O3"])],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
