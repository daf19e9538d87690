"""The 54-joint skeleton, its body-part partition and the 23-joint contact set.

Joint order: the 22 SMPL-X body joints in their usual order, then 16 joints
per hand (palm plus three segments for each of five fingers), left hand
first. Coordinates are metres, y up, rest pose facing +z.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BODY_JOINTS = [
    "pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee", "spine2",
    "left_ankle", "right_ankle", "spine3", "left_foot", "right_foot", "neck",
    "left_collar", "right_collar", "head", "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow", "left_wrist", "right_wrist",
]
BODY_PARENTS = [-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19]

# rest-pose offsets from parent, metres (x = subject's left)
BODY_OFFSETS = [
    (0.0, 0.0, 0.0), (0.09, -0.08, 0.0), (-0.09, -0.08, 0.0), (0.0, 0.11, -0.01),
    (0.0, -0.38, 0.0), (0.0, -0.38, 0.0), (0.0, 0.13, 0.0), (0.0, -0.40, -0.02),
    (0.0, -0.40, -0.02), (0.0, 0.06, 0.0), (0.0, -0.06, 0.12), (0.0, -0.06, 0.12),
    (0.0, 0.21, 0.0), (0.08, 0.12, 0.0), (-0.08, 0.12, 0.0), (0.0, 0.10, 0.02),
    (0.11, 0.03, 0.0), (-0.11, 0.03, 0.0), (0.27, 0.0, 0.0), (-0.27, 0.0, 0.0),
    (0.25, 0.0, 0.0), (-0.25, 0.0, 0.0),
]

FINGERS = ["thumb", "index", "middle", "ring", "pinky"]
# palm-to-knuckle offsets for the left hand (+x points away from the wrist)
_KNUCKLES = [(0.03, 0.0, 0.03), (0.09, 0.0, 0.025), (0.095, 0.0, 0.005), (0.09, 0.0, -0.015), (0.08, 0.0, -0.03)]
_SEGMENT = [0.03, 0.025, 0.02]


def _hand(side: str, wrist: int, start: int):
    sign = 1.0 if side == "left" else -1.0
    names = [f"{side}_palm"]
    parents = [wrist]
    offsets = [(sign * 0.04, 0.0, 0.0)]
    palm = start
    for f, knuckle in zip(FINGERS, _KNUCKLES):
        prev = palm
        for seg in range(3):
            names.append(f"{side}_{f}{seg + 1}")
            parents.append(prev)
            if seg == 0:
                offsets.append((sign * (knuckle[0] - 0.04), knuckle[1], knuckle[2]))
            else:
                offsets.append((sign * _SEGMENT[seg - 1], 0.0, 0.0))
            prev = start + len(names) - 1
    return names, parents, offsets


_LH_NAMES, _LH_PARENTS, _LH_OFFSETS = _hand("left", 20, 22)
_RH_NAMES, _RH_PARENTS, _RH_OFFSETS = _hand("right", 21, 38)

JOINT_NAMES = BODY_JOINTS + _LH_NAMES + _RH_NAMES
PARENTS = BODY_PARENTS + _LH_PARENTS + _RH_PARENTS
OFFSETS = np.array(BODY_OFFSETS + _LH_OFFSETS + _RH_OFFSETS, dtype=np.float64)
LEFT_HAND = list(range(22, 38))
RIGHT_HAND = list(range(38, 54))

# Reduced contact skeleton (23 joints). The middle spine joint is dropped;
# each hand collapses to the mean of its 16 hand joints.
REDUCED_NAMES = [
    "pelvis", "spine1", "spine3", "neck", "head", "left_collar", "right_collar",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow", "left_wrist", "right_wrist",
    "left_hand", "right_hand", "left_hip", "right_hip", "left_knee", "right_knee",
    "left_ankle", "right_ankle", "left_foot", "right_foot",
]
REDUCED_INDEX = {name: i for i, name in enumerate(REDUCED_NAMES)}


@dataclass(frozen=True)
class Skeleton:
    names: list[str] = field(default_factory=lambda: list(JOINT_NAMES))
    parents: list[int] = field(default_factory=lambda: list(PARENTS))
    offsets: np.ndarray = field(default_factory=lambda: OFFSETS.copy())
    left_hand: list[int] = field(default_factory=lambda: list(LEFT_HAND))
    right_hand: list[int] = field(default_factory=lambda: list(RIGHT_HAND))
    partition: dict[str, list[int]] = field(default_factory=lambda: dict(PARTITION))
    name: str = "smplx54"

    @property
    def joint_count(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def validate(self) -> None:
        n = self.joint_count
        if len(self.parents) != n or self.parents[0] != -1:
            raise ValueError("parents must list one entry per joint with the root first")
        for j, p in enumerate(self.parents[1:], start=1):
            if not 0 <= p < j:
                raise ValueError(f"joint {j} has parent {p}; parents must precede children")
        covered = sorted(i for ids in self.partition.values() for i in ids)
        if covered != list(range(n)):
            raise ValueError("body-part partition must cover every joint exactly once")
        if not set(self.left_hand) <= set(self.partition["L"]) or not set(self.right_hand) <= set(self.partition["R"]):
            raise ValueError("hand joint sets must lie inside the L and R parts")

    def bone_lengths(self, positions: np.ndarray) -> np.ndarray:
        """(T, J-1) distances from each non-root joint to its parent."""
        child = np.arange(1, self.joint_count)
        parent = np.array(self.parents[1:])
        return np.linalg.norm(positions[:, child] - positions[:, parent], axis=-1)


_UPPER = ["spine1", "spine2", "spine3", "neck", "left_collar", "right_collar", "head",
          "left_shoulder", "right_shoulder", "left_elbow", "right_elbow", "left_wrist", "right_wrist"]
_LOWER = ["pelvis", "left_hip", "right_hip", "left_knee", "right_knee", "left_ankle", "right_ankle",
          "left_foot", "right_foot"]
PARTITION = {
    "U": sorted(JOINT_NAMES.index(n) for n in _UPPER),
    "D": sorted(JOINT_NAMES.index(n) for n in _LOWER),
    "L": list(LEFT_HAND),
    "R": list(RIGHT_HAND),
}
PART_ORDER = ("U", "D", "L", "R")

DEFAULT_SKELETON = Skeleton()
