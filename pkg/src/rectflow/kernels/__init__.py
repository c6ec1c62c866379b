"""Hot numeric kernels with a compiled and a pure-NumPy implementation.

The compiled (numba) path is used by default. Set ``RECTFLOW_DISABLE_JIT=1``
before import to force the NumPy path; it is also used automatically when
numba cannot be imported. Both paths share signatures and are cross-checked
in the test suite.
"""

import os

from . import _numpy

_disabled = os.environ.get("RECTFLOW_DISABLE_JIT", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _disabled:
        raise ImportError("disabled by RECTFLOW_DISABLE_JIT")
    from . import _numba
except ImportError:
    _numba = None

impl = _numba if _numba is not None else _numpy
BACKEND = "numba" if _numba is not None else "numpy"

mixture_velocity = impl.mixture_velocity
knn_average = impl.knn_average
knn_indices = impl.knn_indices
pairwise_distances = impl.pairwise_distances
linear_assignment = impl.linear_assignment
count_inversions = impl.count_inversions

__all__ = [
    "BACKEND",
    "count_inversions",
    "knn_average",
    "knn_indices",
    "linear_assignment",
    "mixture_velocity",
    "pairwise_distances",
]
