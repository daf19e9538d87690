import csv
import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from duetreact.metrics import (COLUMNS, CROSS_DIM, CROSS_JOINTS, GEOMETRIC_DIM, GaussianStats, MetricsConfig,
                               beat_align_from_beats, beat_align_score, beat_echo_degree, contact_frequency,
                               cross_distance_features, diversity, evaluate, fid, fid_from_features,
                               gaussian_stats, geometric_features, kinematic_beats, kinetic_features, mpjpe_mpjve,
                               summary, to_csv)
from duetreact.motion.skeleton import DEFAULT_SKELETON, REDUCED_INDEX, REDUCED_NAMES
from duetreact.motion.synth import SynthConfig, synth_duet

J = DEFAULT_SKELETON.joint_count


# -- distributions ---------------------------------------------------------------
def test_fid_one_dimensional_closed_form():
    a = GaussianStats(np.array([1.0]), np.array([[4.0]]))
    b = GaussianStats(np.array([-2.0]), np.array([[9.0]]))
    # (1 + 2)^2 + (2 - 3)^2
    assert fid(a, b) == pytest.approx(10.0, rel=1e-12)


def test_fid_diagonal_closed_form(rng):
    va, vb = rng.uniform(0.1, 3, size=5), rng.uniform(0.1, 3, size=5)
    ma, mb = rng.normal(size=5), rng.normal(size=5)
    expected = np.sum((ma - mb) ** 2) + np.sum((np.sqrt(va) - np.sqrt(vb)) ** 2)
    assert fid(GaussianStats(ma, np.diag(va)), GaussianStats(mb, np.diag(vb))) == pytest.approx(expected, rel=1e-10)


def test_fid_identical_sets_is_zero(rng):
    x = rng.normal(size=(50, 6))
    assert fid_from_features(x, x) == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(ValueError):
        fid(gaussian_stats(x), gaussian_stats(x[:, :3]))


@settings(max_examples=25)
@given(st.integers(0, 2**31 - 1))
def test_fid_symmetric_and_nonnegative(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(20, 4)), rng.normal(1.0, 2.0, size=(15, 4))
    ab, ba = fid_from_features(x, y), fid_from_features(y, x)
    assert ab >= 0
    assert ab == pytest.approx(ba, rel=1e-8, abs=1e-10)


def test_gaussian_stats_edge_cases():
    s = gaussian_stats(np.array([[1.0, 2.0]]))
    np.testing.assert_array_equal(s.cov, np.zeros((2, 2)))
    x = np.array([[0.0, 0.0], [2.0, 4.0]])
    np.testing.assert_allclose(gaussian_stats(x).cov, [[2.0, 4.0], [4.0, 8.0]])
    with pytest.raises(ValueError):
        gaussian_stats(np.zeros((0, 3)))


def test_diversity_closed_forms():
    assert diversity(np.array([[0.0, 0.0], [3.0, 4.0]])) == pytest.approx(5.0)
    tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    assert diversity(tri) == pytest.approx((2 + np.sqrt(2)) / 3)
    with pytest.raises(ValueError):
        diversity(np.zeros((1, 2)))


# -- rhythm ------------------------------------------------------------------------
def _speed_track(beats, frames=60):
    """Body whose x offset follows a curve with speed minima exactly at ``beats``."""
    t = np.arange(frames, dtype=float)
    speed = np.ones(frames)
    for b in beats:
        speed -= 0.9 * np.exp(-0.5 * ((t - b) / 1.5) ** 2)
    x = np.cumsum(speed)
    p = np.zeros((frames, len(REDUCED_NAMES), 3))
    p[..., 0] = x[:, None]
    return p


def test_kinematic_beats_at_speed_minima():
    beats = [10, 25, 40]
    found = kinematic_beats(_speed_track(beats))
    for b in beats:
        assert np.min(np.abs(found - b)) <= 1
    assert len(kinematic_beats(np.zeros((30, 23, 3)))) == 0


def test_beat_align_closed_form():
    assert beat_align_from_beats([5, 20], [5, 20]) == 1.0
    assert beat_align_from_beats([8], [5], sigma=3.0) == pytest.approx(np.exp(-0.5))
    assert beat_align_from_beats([], [5]) == 0.0
    with pytest.raises(ValueError):
        beat_align_from_beats([1], [])
    p = _speed_track([10, 30])
    kb = kinematic_beats(p)
    assert beat_align_score(p, kb) == 1.0


def test_beat_echo_degree():
    lead = _speed_track([10, 25, 40])
    assert beat_echo_degree(lead, lead) == 1.0
    assert beat_echo_degree(lead, _speed_track([16, 31, 46]), window=3) == 0.0
    assert beat_echo_degree(lead, _speed_track([12, 31, 42]), window=3) == pytest.approx(2 / 3)
    assert np.isnan(beat_echo_degree(np.zeros((30, 23, 3)), lead))


def test_contact_frequency():
    body = np.zeros((10, J, 3))
    body[:, :, 0] = np.linspace(0, 1, J)
    far = body + np.array([5.0, 0, 0])
    near = body.copy()
    near[5:] += np.array([5.0, 0, 0])
    assert contact_frequency([(body, body)]) == 100.0
    assert contact_frequency([(body, far)]) == 0.0
    assert contact_frequency([(body, near), (body, far)]) == pytest.approx(25.0)
    with pytest.raises(ValueError):
        contact_frequency([(body, body)], delta=0.0)


def test_mpjpe_mpjve_closed_form(rng):
    gt = rng.normal(size=(12, J, 3))
    pe, ve = mpjpe_mpjve(gt + np.array([0.003, 0.0, 0.004]), gt)
    assert pe == pytest.approx(5.0) and ve == pytest.approx(0.0, abs=1e-9)
    drift = gt + np.arange(12)[:, None, None] * np.array([0.001, 0, 0])
    pe, ve = mpjpe_mpjve(drift, gt)
    assert ve == pytest.approx(1.0) and pe == pytest.approx(5.5)
    with pytest.raises(ValueError):
        mpjpe_mpjve(gt, gt[:5])


# -- features --------------------------------------------------------------------
def test_kinetic_constant_velocity():
    frames = np.arange(10)[:, None, None] * np.array([0.1, 0.2, 0.0])
    p = np.broadcast_to(frames, (10, len(REDUCED_NAMES), 3))
    k = kinetic_features(p, fps=30.0)
    assert k.shape == (len(REDUCED_NAMES),)
    np.testing.assert_allclose(k, 0.5 * (0.05 * 900), rtol=1e-12)


def test_cross_distance_translated_copy(rng):
    f = rng.normal(size=(8, len(REDUCED_NAMES), 3))
    lead = f + np.array([0.0, 0.0, 2.0])
    m = cross_distance_features(lead, f).reshape(len(CROSS_JOINTS), len(CROSS_JOINTS))
    assert m.size == CROSS_DIM
    np.testing.assert_allclose(np.diag(m), 2.0)
    i, j = REDUCED_INDEX[CROSS_JOINTS[0]], REDUCED_INDEX[CROSS_JOINTS[1]]
    expected = np.linalg.norm(lead[:, i] - f[:, j], axis=-1).mean()
    assert m[0, 1] == pytest.approx(expected)


def test_geometric_features_are_fractions():
    d = synth_duet(SynthConfig(frames=64, with_audio=False), seed=0)
    g = geometric_features(d.follower.global_positions())
    assert g.shape == (GEOMETRIC_DIM,) and GEOMETRIC_DIM == 32
    assert np.all((g >= 0) & (g <= 1))
    with pytest.raises(ValueError):
        geometric_features(np.zeros((5, 7, 3)))


# -- report ------------------------------------------------------------------------
@pytest.fixture(scope="module")
def duets():
    return [synth_duet(SynthConfig(frames=96), seed=s) for s in range(3)]


def test_evaluate_against_itself(duets):
    m = evaluate(duets, duets)
    for key in ("FID_k", "FID_g", "FID_cd", "MPJPE", "MPJVE"):
        assert m[key] == pytest.approx(0.0, abs=1e-6), key
    assert 0 <= m["CF"] <= 100 and 0 <= m["BED"] <= 1 and 0 <= m["BAS"] <= 1
    assert set(COLUMNS) <= set(m)


def test_evaluate_skips_aligned_errors_for_unmatched_names(duets):
    renamed = [d.slice(0, d.frames) for d in duets]
    for k, d in enumerate(renamed):
        d.name = f"other_{k}"
    m = evaluate(renamed, duets, MetricsConfig(delta=0.2))
    assert "MPJPE" not in m
    with pytest.raises(ValueError):
        evaluate([], duets)


def test_csv_and_summary():
    metrics = {c: float(i) for i, c in enumerate(COLUMNS)}
    rows = list(csv.reader(io.StringIO(to_csv(metrics))))
    assert rows[0] == list(COLUMNS)
    assert [float(v) for v in rows[1]] == list(range(len(COLUMNS)))
    text = summary(metrics, "run")
    assert text.splitlines()[0] == "run" and "FID_k" in text
