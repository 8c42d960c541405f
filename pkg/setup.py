"""Build hook for the optional compiled kernels.

The extension is skipped quietly when Cython or a compiler is missing; the
package then runs on its numpy fallback.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        "src/dgiga/_kernels.pyx",
        compiler_directives={"language_level": "3"},
        quiet=True,
    )
    for ext in ext_modules:
        ext.include_dirs.append(numpy.get_include())
        ext.extra_compile_args.append("-O3")
except ImportError:
    pass

setup(ext_modules=ext_modules)
