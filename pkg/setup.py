from Cython.Build import cythonize
from setuptools import Extension, setup

ext_modules = [
    Extension(
        name="mvglmb._kernels._core",
        sources=["src/mvglmb/_kernels/_core.pyx"],
    )
]

setup(ext_modules=cythonize(ext_modules, language_level="3"))
