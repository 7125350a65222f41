from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension("fwmav._engine", ["src/fwmav/_engine.pyx"],
              extra_compile_args=["-O3"]),
]

setup(ext_modules=cythonize(extensions, language_level=3))
