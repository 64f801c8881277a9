from setuptools import Extension, setup
from Cython.Build import cythonize

extensions = [
    Extension(
        "fedsplitx._kernels._fastkern",
        ["src/fedsplitx/_kernels/_fastkern.pyx"],
        extra_compile_args=["-O3"],
    )
]

setup(ext_modules=cythonize(extensions, language_level="3"))
