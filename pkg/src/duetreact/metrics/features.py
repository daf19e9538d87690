"""Per-sequence feature vectors: kinetic, geometric and cross-distance."""
from __future__ import annotations

import numpy as np

from ..motion.ops import reduce_hand_joints
from ..motion.skeleton import DEFAULT_SKELETON, REDUCED_INDEX, REDUCED_NAMES

KINETIC_DIM = len(REDUCED_NAMES)
CROSS_JOINTS = ("pelvis", "head", "left_wrist", "right_wrist", "left_elbow", "right_elbow",
                "left_knee", "right_knee", "left_ankle", "right_ankle")
CROSS_DIM = len(CROSS_JOINTS) ** 2
UP = np.array([0.0, 1.0, 0.0])


def _reduced(positions) -> np.ndarray:
    p = np.asarray(positions, dtype=np.float64)
    if p.ndim != 3 or p.shape[-1] != 3:
        raise ValueError(f"expected (T, J, 3) positions, got {p.shape}")
    if p.shape[1] == len(REDUCED_NAMES):
        return p
    if p.shape[1] != DEFAULT_SKELETON.joint_count:
        raise ValueError(f"expected {DEFAULT_SKELETON.joint_count} or {len(REDUCED_NAMES)} joints, got {p.shape[1]}")
    return reduce_hand_joints(p)


def kinetic_features(positions, fps: float = 1.0) -> np.ndarray:
    """Half the mean squared speed of each reduced joint (23 values)."""
    p = _reduced(positions)
    if len(p) < 2:
        raise ValueError("kinetic features need at least two frames")
    v = np.diff(p, axis=0) * fps
    return 0.5 * np.mean(np.sum(v * v, axis=-1), axis=0)


def _angle(a, b, c) -> np.ndarray:
    """Interior angle at b, degrees."""
    u, w = a - b, c - b
    cos = np.sum(u * w, axis=-1) / (np.linalg.norm(u, axis=-1) * np.linalg.norm(w, axis=-1) + 1e-12)
    return np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))


def _unit(v) -> np.ndarray:
    return v / (np.linalg.norm(v, axis=-1, keepdims=True) + 1e-12)


def _rest_leg_length() -> float:
    sk = DEFAULT_SKELETON
    total = 0.0
    for name in ("left_hip", "left_knee", "left_ankle"):
        total += abs(sk.offsets[sk.index(name)][1])
    return total


REST_LEG = _rest_leg_length()


def _descriptors(p: np.ndarray) -> dict[str, np.ndarray]:
    j = {n: p[:, REDUCED_INDEX[n]] for n in REDUCED_NAMES}
    left = _unit(j["left_hip"] - j["right_hip"])
    fwd = _unit(np.cross(left, UP))
    h = lambda name: j[name][:, 1]  # noqa: E731
    torso = j["neck"] - j["pelvis"]
    lean = np.sum(torso * fwd, axis=-1) / (np.linalg.norm(torso, axis=-1) + 1e-12)
    side_lean = np.sum(torso * left, axis=-1) / (np.linalg.norm(torso, axis=-1) + 1e-12)
    d = {}
    for s, sgn in (("left", 1.0), ("right", -1.0)):
        o = "right" if s == "left" else "left"
        hand = j[f"{s}_hand"]
        d[f"{s}_hand_above_head"] = h(f"{s}_hand") > h("head")
        d[f"{s}_hand_above_shoulder"] = h(f"{s}_hand") > h(f"{s}_shoulder")
        d[f"{s}_hand_below_hip"] = h(f"{s}_hand") < h(f"{s}_hip")
        d[f"{s}_hand_in_front"] = np.sum((hand - j["spine3"]) * fwd, axis=-1) > 0.2
        d[f"{s}_hand_behind"] = np.sum((hand - j["spine1"]) * fwd, axis=-1) < -0.05
        elbow = _angle(j[f"{s}_shoulder"], j[f"{s}_elbow"], j[f"{s}_wrist"])
        d[f"{s}_elbow_bent"] = elbow < 120.0
        d[f"{s}_arm_straight"] = elbow > 160.0
        d[f"{s}_knee_bent"] = _angle(j[f"{s}_hip"], j[f"{s}_knee"], j[f"{s}_ankle"]) < 150.0
        d[f"{s}_foot_raised"] = h(f"{s}_ankle") > h(f"{o}_ankle") + 0.05
        d[f"{s}_hand_out_wide"] = sgn * np.sum((hand - j["pelvis"]) * left, axis=-1) > 0.5
        d[f"{s}_hand_near_head"] = np.linalg.norm(hand - j["head"], axis=-1) < 0.2
    d["hands_together"] = np.linalg.norm(j["left_hand"] - j["right_hand"], axis=-1) < 0.15
    d["hands_apart"] = np.linalg.norm(j["left_hand"] - j["right_hand"], axis=-1) > 1.0
    d["feet_crossed"] = np.sum((j["left_foot"] - j["right_foot"]) * left, axis=-1) < 0.0
    gap = (j["left_ankle"] - j["right_ankle"])[:, [0, 2]]
    d["feet_wide"] = np.linalg.norm(gap, axis=-1) > 0.5
    d["head_forward"] = np.sum((j["head"] - j["neck"]) * fwd, axis=-1) > 0.05
    d["lean_forward"] = lean > np.sin(np.radians(15.0))
    d["lean_back"] = lean < -np.sin(np.radians(10.0))
    d["lean_side"] = np.abs(side_lean) > np.sin(np.radians(10.0))
    d["crouch"] = h("pelvis") - np.minimum(h("left_ankle"), h("right_ankle")) < 0.9 * REST_LEG
    d["both_hands_up"] = d["left_hand_above_shoulder"] & d["right_hand_above_shoulder"]
    return d


GEOMETRIC_NAMES = tuple(_descriptors(np.zeros((1, len(REDUCED_NAMES), 3))).keys())
GEOMETRIC_DIM = len(GEOMETRIC_NAMES)


def geometric_descriptors(positions) -> np.ndarray:
    """(T, 32) boolean pose relations, columns ordered as GEOMETRIC_NAMES."""
    d = _descriptors(_reduced(positions))
    return np.stack([d[n] for n in GEOMETRIC_NAMES], axis=-1)


def geometric_features(positions) -> np.ndarray:
    """Fraction of frames on which each of the 32 relations holds."""
    return geometric_descriptors(positions).mean(axis=0)


def cross_distance_features(leader_global, follower_global) -> np.ndarray:
    """Frame-averaged 10 x 10 leader-to-follower joint distances, flattened row-major (leader rows)."""
    a, b = _reduced(leader_global), _reduced(follower_global)
    if len(a) != len(b):
        raise ValueError(f"leader has {len(a)} frames, follower {len(b)}")
    idx = [REDUCED_INDEX[n] for n in CROSS_JOINTS]
    la, fb = a[:, idx], b[:, idx]
    dist = np.linalg.norm(la[:, :, None, :] - fb[:, None, :, :], axis=-1)
    return dist.mean(axis=0).reshape(-1)
