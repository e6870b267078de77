"""Build script for the optional compiled kernels.

The extension is best-effort: if a C toolchain or Cython is unavailable the
install still succeeds and the package falls back to the pure-numpy kernels
at import time (see dcm._backend).
"""

import os

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Swallow compiler failures so the pure-Python install still works."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        print(f"warning: compiled kernels unavailable ({exc}); "
              "using the pure-numpy fallback")


def _extensions():
    if os.environ.get("DCM_NO_EXT"):
        return []
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError as exc:
        print(f"warning: skipping compiled kernels ({exc})")
        return []
    ext = Extension(
        "dcm._kernels",
        ["src/dcm/_kernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=_extensions(), cmdclass={"build_ext": OptionalBuildExt})
