"""Pure-numpy versions of the compiled kernels."""
import numpy as np

_CHUNK = 256


def nearest_codes(z: np.ndarray, codebook: np.ndarray) -> np.ndarray:
    z = np.ascontiguousarray(z, dtype=np.float64)
    codebook = np.ascontiguousarray(codebook, dtype=np.float64)
    out = np.empty(len(z), dtype=np.int64)
    for start in range(0, len(z), _CHUNK):
        block = z[start:start + _CHUNK]
        d2 = ((block[:, None, :] - codebook[None, :, :]) ** 2).sum(axis=-1)
        out[start:start + _CHUNK] = np.argmin(d2, axis=1)  # first minimum wins ties
    return out


def contact_mask(follower: np.ndarray, leader: np.ndarray, delta: float) -> np.ndarray:
    diff = follower[:, :, None, :] - leader[:, None, :, :]
    dist = np.sqrt(diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1] + diff[..., 2] * diff[..., 2])
    return (dist <= delta).astype(np.uint8)


def mean_pairwise_distance(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    if n < 2:
        raise ValueError("need at least two vectors")
    total = 0.0
    for i in range(n - 1):
        total += np.sqrt(((x[i + 1:] - x[i]) ** 2).sum(axis=1)).sum()
    return float(total / (n * (n - 1) / 2.0))
