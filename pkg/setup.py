"""Builds the optional Cython kernels; the package works without them."""
from setuptools import setup

try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension("cbnet._kernels", ["src/cbnet/_kernels.pyx"], include_dirs=[np.get_include()])],
        language_level=3,
    )

setup(ext_modules=ext_modules)
