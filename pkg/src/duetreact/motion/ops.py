"""Conversions between global, local and relative motion representations."""
from __future__ import annotations

import numpy as np

from .. import _kernels
from .skeleton import DEFAULT_SKELETON, REDUCED_NAMES, Skeleton


def _reduced_sources(skeleton: Skeleton) -> list:
    out = []
    for name in REDUCED_NAMES:
        if name == "left_hand":
            out.append(list(skeleton.left_hand))
        elif name == "right_hand":
            out.append(list(skeleton.right_hand))
        else:
            out.append(skeleton.index(name))
    return out


def reduce_hand_joints(positions: np.ndarray, skeleton: Skeleton = DEFAULT_SKELETON) -> np.ndarray:
    """(T, 54, 3) -> (T, 23, 3) in the ``REDUCED_NAMES`` order.

    Each hand becomes the mean of its hand joints; listed body joints pass
    through unchanged.
    """
    positions = np.asarray(positions, dtype=np.float64)
    if positions.shape[-2] != skeleton.joint_count:
        raise ValueError(f"expected {skeleton.joint_count} joints, got {positions.shape[-2]}")
    cols = []
    for src in _reduced_sources(skeleton):
        if isinstance(src, list):
            cols.append(positions[..., src, :].mean(axis=-2))
        else:
            cols.append(positions[..., src, :])
    return np.stack(cols, axis=-2)


def reduction_matrix(skeleton: Skeleton = DEFAULT_SKELETON) -> np.ndarray:
    """(23, 54) averaging matrix equal to :func:`reduce_hand_joints` as a linear map."""
    srcs = _reduced_sources(skeleton)
    m = np.zeros((len(srcs), skeleton.joint_count))
    for i, src in enumerate(srcs):
        if isinstance(src, list):
            m[i, src] = 1.0 / len(src)
        else:
            m[i, src] = 1.0
    return m


def extract_contact(leader_global: np.ndarray, follower_global: np.ndarray, delta: float = 0.10,
                    skeleton: Skeleton = DEFAULT_SKELETON) -> np.ndarray:
    """Binary (T, 23, 23) matrix; entry [t, i, j] is follower joint i vs leader joint j."""
    if delta <= 0:
        raise ValueError("contact threshold must be positive")
    leader_global = np.asarray(leader_global, dtype=np.float64)
    follower_global = np.asarray(follower_global, dtype=np.float64)
    if leader_global.shape[0] != follower_global.shape[0]:
        raise ValueError(f"frame counts differ: leader {leader_global.shape[0]}, follower {follower_global.shape[0]}")
    lead = reduce_hand_joints(leader_global, skeleton)
    foll = reduce_hand_joints(follower_global, skeleton)
    return _kernels.contact_mask(foll, lead, delta)


def compute_relative_trajectory(leader_root: np.ndarray, follower_root: np.ndarray) -> np.ndarray:
    """Per-frame offset follower root minus leader root, (T, 3)."""
    leader_root = np.asarray(leader_root, dtype=np.float64)
    follower_root = np.asarray(follower_root, dtype=np.float64)
    if leader_root.shape != follower_root.shape:
        raise ValueError(f"root paths differ in shape: {leader_root.shape} vs {follower_root.shape}")
    return follower_root - leader_root


def to_local(global_positions: np.ndarray, root: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Split (T, J, 3) into root-centred positions and the root path."""
    global_positions = np.asarray(global_positions, dtype=np.float64)
    translation = global_positions[:, root].copy()
    local = global_positions - translation[:, None, :]
    local[:, root] = 0.0
    return local, translation


def to_global(local_positions: np.ndarray, translation: np.ndarray) -> np.ndarray:
    return np.asarray(local_positions) + np.asarray(translation)[:, None, :]


def root_velocity(translation: np.ndarray) -> np.ndarray:
    """Per-frame root displacement; frame 0 gets zero."""
    vel = np.zeros_like(translation)
    vel[1:] = np.diff(translation, axis=0)
    return vel


def integrate_velocity(velocity: np.ndarray, start: np.ndarray | None = None) -> np.ndarray:
    start = np.zeros(velocity.shape[-1]) if start is None else np.asarray(start)
    return start + np.cumsum(velocity, axis=0)


# -- rotations ---------------------------------------------------------------

def axis_angle_to_matrix(aa: np.ndarray) -> np.ndarray:
    """Rodrigues formula over the last axis: (..., 3) -> (..., 3, 3)."""
    aa = np.asarray(aa, dtype=np.float64)
    theta = np.linalg.norm(aa, axis=-1, keepdims=True)
    safe = np.where(theta > 1e-12, theta, 1.0)
    k = aa / safe
    kx, ky, kz = k[..., 0], k[..., 1], k[..., 2]
    zero = np.zeros_like(kx)
    K = np.stack([zero, -kz, ky, kz, zero, -kx, -ky, kx, zero], axis=-1).reshape(aa.shape[:-1] + (3, 3))
    s = np.sin(theta)[..., None]
    c = np.cos(theta)[..., None]
    eye = np.broadcast_to(np.eye(3), K.shape)
    R = eye + s * K + (1 - c) * (K @ K)
    return np.where((theta > 1e-12)[..., None], R, eye)


def matrix_to_rot6d(R: np.ndarray) -> np.ndarray:
    """First two columns of each rotation matrix, flattened column-major -> (..., 6)."""
    return np.concatenate([R[..., :, 0], R[..., :, 1]], axis=-1)


def rot6d_to_matrix(r6: np.ndarray) -> np.ndarray:
    """Gram-Schmidt inverse of :func:`matrix_to_rot6d`."""
    a1, a2 = r6[..., :3], r6[..., 3:]
    b1 = a1 / np.linalg.norm(a1, axis=-1, keepdims=True)
    a2 = a2 - (b1 * a2).sum(-1, keepdims=True) * b1
    b2 = a2 / np.linalg.norm(a2, axis=-1, keepdims=True)
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=-1)


def rotation_between(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Smallest rotation matrix taking direction ``u`` onto direction ``v``."""
    u = u / np.linalg.norm(u)
    v = v / np.linalg.norm(v)
    axis = np.cross(u, v)
    s = np.linalg.norm(axis)
    c = float(np.clip(u @ v, -1.0, 1.0))
    if s < 1e-12:
        if c > 0:
            return np.eye(3)
        perp = np.cross(u, [1.0, 0.0, 0.0])
        if np.linalg.norm(perp) < 1e-6:
            perp = np.cross(u, [0.0, 1.0, 0.0])
        return axis_angle_to_matrix(np.pi * perp / np.linalg.norm(perp))
    return axis_angle_to_matrix(axis / s * np.arctan2(s, c))


def forward_kinematics(local_rot: np.ndarray, root_pos: np.ndarray,
                       skeleton: Skeleton = DEFAULT_SKELETON) -> tuple[np.ndarray, np.ndarray]:
    """Global joint positions and rotations from per-joint local rotations.

    ``local_rot`` is (T, J, 3, 3); ``root_pos`` is (T, 3).
    """
    T, J = local_rot.shape[:2]
    glob_rot = np.empty_like(local_rot)
    pos = np.empty((T, J, 3))
    for j, p in enumerate(skeleton.parents):
        if p < 0:
            glob_rot[:, j] = local_rot[:, j]
            pos[:, j] = root_pos
        else:
            glob_rot[:, j] = glob_rot[:, p] @ local_rot[:, j]
            pos[:, j] = pos[:, p] + glob_rot[:, p] @ skeleton.offsets[j]
    return pos, glob_rot
