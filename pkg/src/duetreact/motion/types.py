from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ops import to_global


@dataclass
class MotionSequence:
    """One dancer: root-centred joints, local 6D rotations and the root path."""

    local_positions: np.ndarray  # (T, J, 3)
    rotations: np.ndarray  # (T, J, 6)
    root_translation: np.ndarray  # (T, 3)
    fps: float = 30.0

    @property
    def frames(self) -> int:
        return self.local_positions.shape[0]

    @property
    def joints(self) -> int:
        return self.local_positions.shape[1]

    def global_positions(self) -> np.ndarray:
        return to_global(self.local_positions, self.root_translation)

    def slice(self, start: int, stop: int) -> "MotionSequence":
        return MotionSequence(self.local_positions[start:stop], self.rotations[start:stop],
                              self.root_translation[start:stop], self.fps)


@dataclass
class DuetSample:
    """Leader, follower, relative root offsets, contacts and music features."""

    leader: MotionSequence
    follower: MotionSequence
    trajectory: np.ndarray  # (T, 3) follower root minus leader root
    contacts: np.ndarray  # (T, 23, 23) uint8
    music: np.ndarray | None = None  # (T, 54)
    waveform: np.ndarray | None = None
    sample_rate: int | None = None
    name: str = "duet"
    episodes: list | None = None

    @property
    def frames(self) -> int:
        return self.leader.frames

    @property
    def fps(self) -> float:
        return self.leader.fps

    def validate(self) -> None:
        T = self.frames
        lengths = {"follower": self.follower.frames, "trajectory": len(self.trajectory), "contacts": len(self.contacts)}
        if self.music is not None:
            lengths["music"] = len(self.music)
        bad = {k: v for k, v in lengths.items() if v != T}
        if bad:
            raise ValueError(f"components disagree with leader length {T}: {bad}")
        if self.follower.fps != self.leader.fps:
            raise ValueError("leader and follower fps differ")

    def slice(self, start: int, stop: int) -> "DuetSample":
        return DuetSample(self.leader.slice(start, stop), self.follower.slice(start, stop),
                          self.trajectory[start:stop], self.contacts[start:stop],
                          None if self.music is None else self.music[start:stop], None, None, self.name)
