from setuptools import Extension, setup

# The warp kernels are optional: the package falls back to the numpy
# implementation in pawmatch.imaging._warp_py when the extension is absent.
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "pawmatch.imaging._warp",
                ["src/pawmatch/imaging/_warp.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
