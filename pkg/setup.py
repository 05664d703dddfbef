"""Build script for the compiled kernels.

The extensions are optional: if Cython or a C compiler is unavailable the
package installs without them and falls back to the numpy implementations
in demoforge._kernels.
"""

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize

    # -ffp-contract=off keeps results bitwise identical to the numpy
    # fallbacks (no FMA contraction); -O3 vectorizes the kernel passes.
    flags = [
        "-O3",
        "-ffp-contract=off",
        "-march=native",
        "-funroll-loops",
        "-fno-trapping-math",
        "-fno-math-errno",
    ]
    extensions = cythonize(
        [
            Extension(
                "demoforge._kernels._fps",
                ["src/demoforge/_kernels/_fps.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=flags,
            ),
            Extension(
                "demoforge._kernels._raster",
                ["src/demoforge/_kernels/_raster.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=flags,
            ),
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
