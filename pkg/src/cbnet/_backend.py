"""Pick the compiled kernels when available.

Set ``CBNET_BACKEND=python`` to force the numpy fallback.
"""
import os

if os.environ.get("CBNET_BACKEND", "").lower() == "python":
    from cbnet import _kernels_py as kernels
    BACKEND = "python"
else:
    try:
        from cbnet import _kernels as kernels  # type: ignore[attr-defined]
        BACKEND = "cython"
    except ImportError:
        from cbnet import _kernels_py as kernels
        BACKEND = "python"

best_split = kernels.best_split
knn_mean = kernels.knn_mean
