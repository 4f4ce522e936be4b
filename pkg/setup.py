import numpy as np  # noqa: F401  (build-time check that numpy is importable)
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # build the pure-Python package only
    cythonize = None

extensions = [
    Extension(
        "geotex.geodesics._kernels",
        ["src/geotex/geodesics/_kernels.pyx"],
        extra_compile_args=["-O3", "-ffp-contract=off"],
        optional=True,
    ),
    Extension(
        "geotex._gmm",
        ["src/geotex/_gmm.pyx"],
        extra_compile_args=["-O3", "-ffp-contract=off"],
        optional=True,
    ),
]

setup(
    ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"})
    if cythonize
    else [],
)
