"""Build script for the optional compiled kernel core.

The package is fully functional without the extension: gemi.kernels falls
back to numpy if gemi._core is absent, so a failed compile only costs speed.
"""

from setuptools import setup

try:
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    # -ffp-contract=off keeps the dense and sparse kernels bit-identical:
    # both accumulate with the same mul-then-add sequence, no FMA fusion.
    extensions = cythonize(
        [
            Extension(
                "gemi._core",
                ["src/gemi/_core.pyx"],
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
