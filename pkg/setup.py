import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# -ffp-contract=off keeps the C kernel bit-identical to the numpy fallback
# (no fused multiply-add contraction).
compile_args = ["-O2", "-ffp-contract=off"]

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "meshforge.render._rastc",
                ["src/meshforge/render/_rastc.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=compile_args,
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )

setup(ext_modules=ext_modules)
