"""Contact frequency, kinematic beats, beat echo and beat alignment."""
from __future__ import annotations

import numpy as np

from ..motion.ops import extract_contact


def contact_frequency(pairs, delta: float = 0.10) -> float:
    """Percentage of frames, pooled over all duets, with any reduced joint pair within ``delta``.

    ``pairs`` yields ``(leader_global, follower_global)`` arrays.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    hit = total = 0
    for leader, follower in pairs:
        c = extract_contact(leader, follower, delta)
        hit += int(np.count_nonzero(c.reshape(len(c), -1).any(axis=1)))
        total += len(c)
    return 100.0 * hit / total if total else float("nan")


def motion_speed(positions) -> np.ndarray:
    """Mean joint speed per frame; frame 0 copies frame 1."""
    p = np.asarray(positions, dtype=np.float64)
    if len(p) < 2:
        return np.zeros(len(p))
    s = np.linalg.norm(np.diff(p, axis=0), axis=-1).mean(axis=1)
    return np.concatenate([s[:1], s])


def kinematic_beats(positions) -> np.ndarray:
    """Frames where mean joint speed hits a local minimum below its sequence mean.

    A minimum needs a strict drop from the previous frame and no rise into
    the next one, so flat stretches (a static body) produce no beats.
    """
    s = motion_speed(positions)
    if len(s) < 3:
        return np.zeros(0, dtype=np.int64)
    mid = s[1:-1]
    is_min = (mid < s[:-2]) & (mid <= s[2:]) & (mid < s.mean())
    return np.nonzero(is_min)[0] + 1


def beat_echo_degree(leader, follower, window: int = 3) -> float:
    """Share of leader beats with a follower beat within +-window frames; NaN if the leader has none."""
    if window < 0:
        raise ValueError("window must be non-negative")
    lb = kinematic_beats(leader)
    if len(lb) == 0:
        return float("nan")
    fb = kinematic_beats(follower)
    if len(fb) == 0:
        return 0.0
    gaps = np.abs(lb[:, None] - fb[None, :]).min(axis=1)
    return float(np.mean(gaps <= window))


def beat_align_score(positions, music_beats, sigma: float = 3.0) -> float:
    """Mean over music beats of exp(-d^2 / (2 sigma^2)), d the gap to the nearest kinematic beat."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    mb = np.asarray(music_beats, dtype=np.float64).reshape(-1)
    if len(mb) == 0:
        raise ValueError("no music beats")
    kb = kinematic_beats(positions)
    return beat_align_from_beats(kb, mb, sigma)


def beat_align_from_beats(kinematic, music_beats, sigma: float = 3.0) -> float:
    kb = np.asarray(kinematic, dtype=np.float64).reshape(-1)
    mb = np.asarray(music_beats, dtype=np.float64).reshape(-1)
    if len(mb) == 0:
        raise ValueError("no music beats")
    if len(kb) == 0:
        return 0.0
    d = np.abs(mb[:, None] - kb[None, :]).min(axis=1)
    return float(np.mean(np.exp(-d * d / (2.0 * sigma * sigma))))


def mpjpe_mpjve(pred, gt, scale: float = 1000.0) -> tuple[float, float]:
    """Mean per-joint position and velocity error; ``scale`` converts input units to millimetres."""
    a, b = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    pe = np.linalg.norm(a - b, axis=-1).mean() * scale
    if len(a) < 2:
        return float(pe), 0.0
    ve = np.linalg.norm(np.diff(a, axis=0) - np.diff(b, axis=0), axis=-1).mean() * scale
    return float(pe), float(ve)
