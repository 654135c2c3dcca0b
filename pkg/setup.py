import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

# -ffp-contract=off forbids FMA contraction so the compiled kernel performs
# bit-identical arithmetic to the pure-Python reference backend.
ext = Extension(
    "diffnet.diffusion._ckernel",
    ["src/diffnet/diffusion/_ckernel.pyx"],
    include_dirs=[numpy.get_include()],
    extra_compile_args=["-O3", "-ffp-contract=off"],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
)

setup(
    ext_modules=cythonize([ext], compiler_directives={"language_level": "3"}),
)
