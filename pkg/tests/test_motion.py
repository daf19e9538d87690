import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from duetreact.motion import (DEFAULT_SKELETON, JOINT_NAMES, PARTITION, REDUCED_NAMES, ContactEpisode,
                              InfeasibleScheduleError, SynthConfig, extract_contact, reduce_hand_joints,
                              synth_duet)
from duetreact.motion.ops import (axis_angle_to_matrix, compute_relative_trajectory, integrate_velocity,
                                  matrix_to_rot6d, reduction_matrix, root_velocity, rot6d_to_matrix, to_global,
                                  to_local)
from duetreact.motion.skeleton import REDUCED_INDEX, Skeleton

vals = st.floats(-2, 2, allow_nan=False, allow_infinity=False)


def test_skeleton_shape():
    sk = DEFAULT_SKELETON
    sk.validate()
    assert sk.joint_count == 54 and len(JOINT_NAMES) == 54
    assert len(REDUCED_NAMES) == 23
    assert sorted(i for ids in PARTITION.values() for i in ids) == list(range(54))
    assert len(PARTITION["L"]) == len(PARTITION["R"]) == 16


def test_invalid_skeleton_rejected():
    bad = Skeleton(parents=[-1] + [5] * 53)
    with pytest.raises(ValueError):
        bad.validate()


@given(hnp.arrays(np.float64, (2, 54, 3), elements=vals), hnp.arrays(np.float64, (3,), elements=vals))
def test_reduction_commutes_with_translation(p, shift):
    np.testing.assert_allclose(reduce_hand_joints(p + shift), reduce_hand_joints(p) + shift, atol=1e-12)


def test_reduction_matrix_equals_reduce(rng):
    p = rng.normal(size=(3, 54, 3))
    np.testing.assert_allclose(reduction_matrix() @ p, reduce_hand_joints(p), atol=1e-14)
    hand = reduce_hand_joints(p)[:, REDUCED_INDEX["left_hand"]]
    np.testing.assert_allclose(hand, p[:, PARTITION["L"]].mean(axis=1), atol=1e-14)


def test_reduce_rejects_wrong_joint_count():
    with pytest.raises(ValueError):
        reduce_hand_joints(np.zeros((1, 23, 3)))


def test_contact_threshold_is_inclusive():
    lead = np.zeros((1, 54, 3))
    foll = np.full((1, 54, 3), 10.0)
    foll[0, DEFAULT_SKELETON.index("left_wrist")] = [0.0, 0.0, 0.1]
    c = extract_contact(lead, foll, delta=0.1)
    assert c.shape == (1, 23, 23) and c.dtype == np.uint8
    i = REDUCED_INDEX["left_wrist"]
    assert c[0, i].all() and c.sum() == 23
    with pytest.raises(ValueError):
        extract_contact(lead, foll, delta=0.0)


@given(hnp.arrays(np.float64, (3, 54, 3), elements=vals))
def test_local_global_round_trip(g):
    local, trans = to_local(g)
    assert np.all(local[:, 0] == 0)
    np.testing.assert_allclose(to_global(local, trans), g, atol=1e-12)


def test_relative_trajectory_and_velocity(rng):
    a, b = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    np.testing.assert_array_equal(compute_relative_trajectory(a, b), b - a)
    v = root_velocity(a)
    np.testing.assert_allclose(integrate_velocity(v, a[0]), a, atol=1e-12)
    with pytest.raises(ValueError):
        compute_relative_trajectory(a, b[:4])


@given(hnp.arrays(np.float64, (4, 3), elements=st.floats(-3, 3)))
def test_rot6d_round_trip(aa):
    R = axis_angle_to_matrix(aa)
    np.testing.assert_allclose(R @ np.swapaxes(R, -1, -2), np.broadcast_to(np.eye(3), R.shape), atol=1e-12)
    np.testing.assert_allclose(rot6d_to_matrix(matrix_to_rot6d(R)), R, atol=1e-12)


def test_synth_is_deterministic_and_consistent():
    cfg = SynthConfig(frames=64)
    a, b = synth_duet(cfg, seed=5), synth_duet(cfg, seed=5)
    for x, y in ((a.leader.local_positions, b.leader.local_positions), (a.contacts, b.contacts), (a.music, b.music)):
        assert np.array_equal(x, y)
    a.validate()
    assert a.contacts.shape == (64, 23, 23) and a.music.shape == (64, 54)
    np.testing.assert_array_equal(a.trajectory, a.follower.root_translation - a.leader.root_translation)
    assert not np.array_equal(a.leader.local_positions, synth_duet(cfg, seed=6).leader.local_positions)


@pytest.mark.parametrize("seed", range(4))
def test_scripted_episodes_are_recovered(seed):
    d = synth_duet(SynthConfig(frames=96), seed=seed)
    assert d.episodes
    for ep in d.episodes:
        i, j = REDUCED_INDEX[ep.follower_joint], REDUCED_INDEX[ep.leader_joint]
        assert d.contacts[ep.start:ep.end + 1, i, j].all()


def test_bone_lengths_are_preserved():
    d = synth_duet(SynthConfig(frames=48), seed=2)
    g = d.follower.global_positions()
    lengths = DEFAULT_SKELETON.bone_lengths(g)
    rest = np.linalg.norm(DEFAULT_SKELETON.offsets[1:], axis=-1)
    np.testing.assert_allclose(lengths, np.broadcast_to(rest, lengths.shape), atol=1e-6)


def test_infeasible_schedules_are_rejected():
    clash = [ContactEpisode("left_wrist", "left_wrist", 5, 20), ContactEpisode("left_wrist", "right_wrist", 10, 30)]
    with pytest.raises(InfeasibleScheduleError, match="same joint"):
        synth_duet(SynthConfig(frames=64, episodes=clash))
    with pytest.raises(InfeasibleScheduleError):
        synth_duet(SynthConfig(frames=64, episodes=[ContactEpisode("left_ankle", "left_wrist", 5, 9)]))
    with pytest.raises(InfeasibleScheduleError):
        synth_duet(SynthConfig(frames=64, episodes=[ContactEpisode("left_wrist", "left_wrist", 60, 70)]))


def test_slicing_keeps_alignment():
    d = synth_duet(SynthConfig(frames=64), seed=1).slice(8, 40)
    d.validate()
    assert d.frames == 32 and d.music.shape[0] == 32
