"""Hot scan kernels: compiled when available, numpy otherwise.

Set ``DUETREACT_PURE_PYTHON=1`` to force the numpy fallback.
"""
import os

import numpy as np

from . import _fallback

BACKEND = "numpy"
_impl = _fallback
if not os.environ.get("DUETREACT_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _fallback


def nearest_codes(z, codebook) -> np.ndarray:
    return _impl.nearest_codes(np.ascontiguousarray(z, dtype=np.float64),
                               np.ascontiguousarray(codebook, dtype=np.float64))


def contact_mask(follower, leader, delta: float) -> np.ndarray:
    return _impl.contact_mask(np.ascontiguousarray(follower, dtype=np.float64),
                              np.ascontiguousarray(leader, dtype=np.float64), float(delta))


def mean_pairwise_distance(x) -> float:
    return float(_impl.mean_pairwise_distance(np.ascontiguousarray(x, dtype=np.float64)))
