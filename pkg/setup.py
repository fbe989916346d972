from pathlib import Path

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

PYX = Path("src/bustree/_kernels.pyx")
CSRC = PYX.with_suffix(".c")

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [Extension("bustree._kernels", [str(PYX)], extra_compile_args=["-O3"])],
        compiler_directives={"language_level": "3"},
    )
elif CSRC.exists():
    # pre-generated C source; lets the sdist build without Cython
    ext_modules = [Extension("bustree._kernels", [str(CSRC)], extra_compile_args=["-O3"])]

setup(ext_modules=ext_modules)
