"""Build script: compiles the optional stencil extension.

The package works without the extension (a numpy fallback is selected at
import time); failures here only cost speed, so the extension is marked
optional.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "mapflow._kernels._stencils",
                ["src/mapflow/_kernels/_stencils.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3", "boundscheck": False, "wraparound": False, "cdivision": True},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
