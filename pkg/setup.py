"""Build hook for the optional compiled kernel backend.

The package is pure Python plus one Cython extension
(juliadim.kernels._cy).  When Cython or a C compiler is unavailable the
extension is simply skipped and the numpy fallback backend is used at
runtime, so a source install never hard-fails on the compile step.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [Extension("juliadim.kernels._cy",
                   ["src/juliadim/kernels/_cy.pyx"])],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
