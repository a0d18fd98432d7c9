import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    # The compiled kernel backend is optional; the package falls back to the
    # pure-Python implementation when the extension is unavailable.
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "geomc.kernels._native",
                ["src/geomc/kernels/_native.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
