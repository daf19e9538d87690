"""Procedural duet generator.

The leader dances a beat-locked pattern (steps, bounce, arm swings) over a
slow drifting root path plus a slower free "gesture" layer. The follower
faces the leader, mirrors the beat layer in time and mirrors the gesture
layer and root path with a lag. Scripted contact episodes pull wrists
together with two-bone IK so that the paired reduced joints end up within
``delta / 2`` of each other.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ops import (axis_angle_to_matrix, compute_relative_trajectory, extract_contact, forward_kinematics,
                  matrix_to_rot6d, reduce_hand_joints, rotation_between, to_local)
from .skeleton import DEFAULT_SKELETON, REDUCED_INDEX, JOINT_NAMES, Skeleton
from .types import DuetSample, MotionSequence

GRID = 2.0 ** -24  # positions are snapped so local/global round trips are exact
WRISTS = ("left_wrist", "right_wrist")


class InfeasibleScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class ContactEpisode:
    follower_joint: str
    leader_joint: str
    start: int
    end: int  # inclusive


@dataclass
class SynthConfig:
    frames: int = 128
    fps: float = 30.0
    bpm: float = 120.0
    lag: int = 6
    delta: float = 0.10
    spacing: float = 0.55
    sample_rate: int = 16000
    episodes: list[ContactEpisode] | None = None  # None -> drawn from the seed
    episode_count: int = 2
    with_audio: bool = True


_MIRROR = {}
for _i, _n in enumerate(JOINT_NAMES):
    if _n.startswith("left_"):
        _MIRROR[_i] = JOINT_NAMES.index("right_" + _n[5:])
    elif _n.startswith("right_"):
        _MIRROR[_i] = JOINT_NAMES.index("left_" + _n[6:])
    else:
        _MIRROR[_i] = _i
MIRROR_INDEX = np.array([_MIRROR[i] for i in range(len(JOINT_NAMES))])


def _mirror_axis_angle(aa: np.ndarray) -> np.ndarray:
    """Reflect rotations through the sagittal (x = 0) plane and swap sides."""
    out = aa[:, MIRROR_INDEX].copy()
    out[..., 1] *= -1.0
    out[..., 2] *= -1.0
    return out


def _style(rng: np.random.Generator) -> dict:
    return {
        "hip": rng.uniform(0.15, 0.45),
        "knee": rng.uniform(0.2, 0.6),
        "spine": rng.uniform(0.03, 0.12),
        "arm_raise": rng.uniform(-1.2, -0.5),
        "arm_swing": rng.uniform(0.2, 0.6),
        "elbow": rng.uniform(0.3, 1.2),
        "elbow_amp": rng.uniform(0.1, 0.5),
        "finger": rng.uniform(0.1, 0.5),
        "head": rng.uniform(0.05, 0.2),
        "gesture_freq": rng.uniform(0.15, 0.45, size=3),
        "gesture_phase": rng.uniform(0, 2 * np.pi, size=3),
        "gesture_amp": rng.uniform(0.1, 0.35, size=3),
        "path_freq": rng.uniform(0.04, 0.12, size=2),
        "path_phase": rng.uniform(0, 2 * np.pi, size=3),
        "path_amp": rng.uniform(0.1, 0.35, size=2),
        "yaw0": rng.uniform(-0.4, 0.4),
        "yaw_amp": rng.uniform(0.1, 0.5),
        "beat_offset": rng.uniform(0.0, 1.0),
    }


def _layers(style: dict, t: np.ndarray, beat_period: float, skeleton: Skeleton):
    """Beat-locked and gesture layers of local axis-angle rotations, (T, J, 3) each."""
    J = skeleton.joint_count
    T = len(t)
    idx = {n: i for i, n in enumerate(skeleton.names)}
    beat = np.zeros((T, J, 3))
    gest = np.zeros((T, J, 3))
    ph = np.pi * (t / beat_period - style["beat_offset"])
    c = np.cos(ph)  # extremes (speed minima) on every beat
    beat[:, idx["left_hip"], 0] = style["hip"] * c
    beat[:, idx["right_hip"], 0] = -style["hip"] * c
    beat[:, idx["left_knee"], 0] = style["knee"] * (1 + c) / 2
    beat[:, idx["right_knee"], 0] = style["knee"] * (1 - c) / 2
    beat[:, idx["spine1"], 2] = style["spine"] * c
    beat[:, idx["head"], 0] = style["head"] * c
    for side, sgn in (("left", 1.0), ("right", -1.0)):
        beat[:, idx[f"{side}_shoulder"], 2] = sgn * style["arm_raise"]
        beat[:, idx[f"{side}_shoulder"], 1] = sgn * style["arm_swing"] * c
        beat[:, idx[f"{side}_elbow"], 1] = -sgn * (style["elbow"] + style["elbow_amp"] * c)
        for f in ("thumb", "index", "middle", "ring", "pinky"):
            for seg in (1, 2, 3):
                beat[:, idx[f"{side}_{f}{seg}"], 2] = -sgn * style["finger"] * (1 + c) / 2
    g = style["gesture_amp"][:, None] * np.sin(2 * np.pi * style["gesture_freq"][:, None] * t[None]
                                                 + style["gesture_phase"][:, None])
    gest[:, idx["spine3"], 1] = g[0]
    gest[:, idx["left_shoulder"], 0] = g[1]
    gest[:, idx["right_shoulder"], 0] = g[2]
    gest[:, idx["left_collar"], 2] = 0.3 * g[1]
    gest[:, idx["right_collar"], 2] = -0.3 * g[2]
    return beat, gest


def _root_path(style: dict, t: np.ndarray, beat_period: float):
    fx, fz = style["path_freq"]
    px, pz, py = style["path_phase"]
    ax, az = style["path_amp"]
    x = ax * np.sin(2 * np.pi * fx * t + px)
    z = az * np.sin(2 * np.pi * fz * t + pz)
    y = 0.92 - 0.03 * (1 + np.cos(np.pi * (t / beat_period - style["beat_offset"]))) / 2
    yaw = style["yaw0"] + style["yaw_amp"] * np.sin(2 * np.pi * 0.05 * t + py)
    return np.stack([x, y, z], axis=-1), yaw


def _yaw_matrix(yaw: np.ndarray) -> np.ndarray:
    aa = np.zeros(yaw.shape + (3,))
    aa[..., 1] = yaw
    return axis_angle_to_matrix(aa)


def _lagged(arr: np.ndarray, lag: int) -> np.ndarray:
    if lag <= 0:
        return arr.copy()
    idx = np.clip(np.arange(len(arr)) - lag, 0, None)
    return arr[idx]


def _ik_arm(local_rot, glob_rot, pos, frame, side, target, skeleton):
    """Bend one arm so the wrist reaches ``target``; edits ``local_rot`` in place."""
    s, e, w = (skeleton.index(f"{side}_{n}") for n in ("shoulder", "elbow", "wrist"))
    a = np.linalg.norm(skeleton.offsets[e])
    b = np.linalg.norm(skeleton.offsets[w])
    S = pos[frame, s]
    to = target - S
    d = np.linalg.norm(to)
    if d > a + b - 1e-6 or d < abs(a - b) + 1e-6:
        return False
    u = to / d
    pole = np.array([0.0, -1.0, 0.0])
    v = pole - (pole @ u) * u
    if np.linalg.norm(v) < 1e-9:
        v = np.array([0.0, 0.0, -1.0]) - u[2] * u
    v /= np.linalg.norm(v)
    cos_a = (a * a + d * d - b * b) / (2 * a * d)
    E = S + a * (cos_a * u + np.sqrt(max(0.0, 1 - cos_a ** 2)) * v)
    parent = skeleton.parents[s]
    Gs = glob_rot[frame, s]
    Gs_new = rotation_between(Gs @ skeleton.offsets[e], E - S) @ Gs
    local_rot[frame, s] = glob_rot[frame, parent].T @ Gs_new
    Ge = Gs_new @ local_rot[frame, e]
    Ge_new = rotation_between(Ge @ skeleton.offsets[w], target - E) @ Ge
    local_rot[frame, e] = Gs_new.T @ Ge_new
    return True


def _random_episodes(rng: np.random.Generator, frames: int, count: int) -> list[ContactEpisode]:
    episodes: list[ContactEpisode] = []
    tries = 0
    while len(episodes) < count and tries < 50:
        tries += 1
        length = int(rng.integers(max(4, frames // 8), max(5, frames // 3)))
        start = int(rng.integers(4, max(5, frames - length - 4)))
        ep = ContactEpisode(str(rng.choice(WRISTS)), str(rng.choice(WRISTS)), start, min(frames - 1, start + length))
        if not _conflicts(episodes + [ep]):
            episodes.append(ep)
    return sorted(episodes, key=lambda e: (e.start, e.follower_joint))


def _conflicts(episodes) -> str | None:
    for i, a in enumerate(episodes):
        for b in episodes[i + 1:]:
            overlap = a.start <= b.end + 4 and b.start <= a.end + 4
            if overlap and (a.follower_joint == b.follower_joint or a.leader_joint == b.leader_joint):
                return f"{a} and {b} drive the same joint in overlapping frames"
    return None


def _ramp_weights(frames: int, ep: ContactEpisode, ramp: int = 4) -> np.ndarray:
    w = np.zeros(frames)
    w[ep.start:ep.end + 1] = 1.0
    for k in range(1, ramp + 1):
        val = 1.0 - k / (ramp + 1)
        if ep.start - k >= 0:
            w[ep.start - k] = max(w[ep.start - k], val)
        if ep.end + k < frames:
            w[ep.end + k] = max(w[ep.end + k], val)
    return w


def _snap(x: np.ndarray) -> np.ndarray:
    return np.round(x / GRID) * GRID


def synth_duet(config: SynthConfig | None = None, seed: int = 0,
               skeleton: Skeleton = DEFAULT_SKELETON) -> DuetSample:
    """Generate one deterministic duet for ``seed``."""
    cfg = config or SynthConfig()
    rng = np.random.default_rng(seed)
    T = cfg.frames
    for ep in cfg.episodes or []:
        if ep.follower_joint not in WRISTS or ep.leader_joint not in WRISTS:
            raise InfeasibleScheduleError(f"episode {ep}: only wrist-to-wrist contacts can be scripted")
        if not 0 <= ep.start <= ep.end < T:
            raise InfeasibleScheduleError(f"episode {ep} lies outside frames [0, {T})")
    style = _style(rng)
    episodes = list(cfg.episodes) if cfg.episodes is not None else _random_episodes(rng, T, cfg.episode_count)
    problem = _conflicts(episodes)
    if problem:
        raise InfeasibleScheduleError(problem)

    t = np.arange(T) / cfg.fps
    beat_period = 60.0 / cfg.bpm
    beat, gest = _layers(style, t, beat_period, skeleton)
    lead_aa = beat + gest
    foll_aa = _mirror_axis_angle(beat) + _lagged(_mirror_axis_angle(gest), cfg.lag)

    lead_root, lead_yaw = _root_path(style, t, beat_period)
    lag_root, lag_yaw = _lagged(lead_root, cfg.lag), _lagged(lead_yaw, cfg.lag)
    facing = _yaw_matrix(lag_yaw) @ np.array([0.0, 0.0, cfg.spacing])
    foll_root = lag_root + facing
    foll_root[:, 1] = lead_root[:, 1]
    foll_yaw = lag_yaw + np.pi

    lead_rot = axis_angle_to_matrix(lead_aa)
    foll_rot = axis_angle_to_matrix(foll_aa)
    lead_rot[:, 0] = _yaw_matrix(lead_yaw) @ lead_rot[:, 0]
    foll_rot[:, 0] = _yaw_matrix(foll_yaw) @ foll_rot[:, 0]

    lead_pos, lead_glob = forward_kinematics(lead_rot, lead_root, skeleton)
    foll_pos, foll_glob = forward_kinematics(foll_rot, foll_root, skeleton)
    if episodes:
        offset_dir = np.array([0.0, -0.15, 0.0])
        sep = cfg.delta / 8.0
        for ep in episodes:
            weights = _ramp_weights(T, ep)
            fs, ls = ep.follower_joint.split("_")[0], ep.leader_joint.split("_")[0]
            fw, lw = skeleton.index(ep.follower_joint), skeleton.index(ep.leader_joint)
            for f in np.nonzero(weights)[0]:
                Sf = foll_pos[f, skeleton.index(f"{fs}_shoulder")]
                Sl = lead_pos[f, skeleton.index(f"{ls}_shoulder")]
                meet = 0.5 * (Sf + Sl) + offset_dir
                across = (Sf - Sl) / np.linalg.norm(Sf - Sl)
                wgt = weights[f]
                tf = (1 - wgt) * foll_pos[f, fw] + wgt * (meet + sep * across)
                tl = (1 - wgt) * lead_pos[f, lw] + wgt * (meet - sep * across)
                ok_f = _ik_arm(foll_rot, foll_glob, foll_pos, f, fs, tf, skeleton)
                ok_l = _ik_arm(lead_rot, lead_glob, lead_pos, f, ls, tl, skeleton)
                if wgt == 1.0 and not (ok_f and ok_l):
                    raise InfeasibleScheduleError(f"episode {ep}: wrists cannot reach each other at frame {f}")
        lead_pos, lead_glob = forward_kinematics(lead_rot, lead_root, skeleton)
        foll_pos, foll_glob = forward_kinematics(foll_rot, foll_root, skeleton)

    lead_pos, foll_pos = _snap(lead_pos), _snap(foll_pos)
    contacts = extract_contact(lead_pos, foll_pos, cfg.delta, skeleton)
    red_l = reduce_hand_joints(lead_pos, skeleton)
    red_f = reduce_hand_joints(foll_pos, skeleton)
    for ep in episodes:
        i, j = REDUCED_INDEX[ep.follower_joint], REDUCED_INDEX[ep.leader_joint]
        gap = np.linalg.norm(red_f[ep.start:ep.end + 1, i] - red_l[ep.start:ep.end + 1, j], axis=-1)
        if np.any(gap > cfg.delta / 2):
            raise InfeasibleScheduleError(f"episode {ep}: constraint violated (max gap {gap.max():.3f} m)")

    lead_local, lead_tr = to_local(lead_pos)
    foll_local, foll_tr = to_local(foll_pos)
    leader = MotionSequence(lead_local, matrix_to_rot6d(lead_rot), lead_tr, cfg.fps)
    follower = MotionSequence(foll_local, matrix_to_rot6d(foll_rot), foll_tr, cfg.fps)
    sample = DuetSample(leader, follower, compute_relative_trajectory(lead_tr, foll_tr), contacts,
                        name=f"synth_{seed:06d}")
    if cfg.with_audio:
        from ..music.features import extract_features, synth_click_track

        wave = synth_click_track(T / cfg.fps, cfg.bpm, cfg.sample_rate,
                                 offset=style["beat_offset"] * beat_period, seed=seed)
        sample.waveform = wave
        sample.sample_rate = cfg.sample_rate
        sample.music = extract_features(wave, cfg.sample_rate, cfg.fps, frames=T).values
    sample.episodes = episodes
    return sample
