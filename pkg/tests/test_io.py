import json

import numpy as np
import pytest

from duetreact import autodiff as ad
from duetreact import io
from duetreact.motion.skeleton import DEFAULT_SKELETON
from duetreact.motion.synth import SynthConfig, synth_duet


@pytest.fixture(scope="module")
def duet():
    return synth_duet(SynthConfig(frames=32), seed=1)


def test_duet_roundtrip_is_exact(duet, tmp_path):
    path = tmp_path / "a.motion"
    io.save_duet(path, duet)
    back = io.load_duet(path)
    for side in ("leader", "follower"):
        a, b = getattr(duet, side), getattr(back, side)
        np.testing.assert_array_equal(a.local_positions, b.local_positions)
        np.testing.assert_array_equal(a.rotations, b.rotations)
        np.testing.assert_array_equal(a.root_translation, b.root_translation)
    np.testing.assert_array_equal(duet.contacts, back.contacts)
    assert back.contacts.dtype == np.uint8
    np.testing.assert_array_equal(duet.music, back.music)
    assert back.name == duet.name
    # writing the loaded copy gives the same bytes
    io.save_duet(tmp_path / "b.motion", back)
    assert io.file_sha256(path) == io.file_sha256(tmp_path / "b.motion")


def test_motion_roundtrip_and_leader_from_duet(duet, tmp_path):
    io.save_motion(tmp_path / "m.motion", duet.follower)
    m = io.load_motion(tmp_path / "m.motion")
    np.testing.assert_array_equal(m.global_positions(), duet.follower.global_positions())
    io.save_duet(tmp_path / "d.motion", duet)
    lead = io.load_motion(tmp_path / "d.motion")
    np.testing.assert_array_equal(lead.local_positions, duet.leader.local_positions)


def test_features_roundtrip(duet, tmp_path):
    io.save_features(tmp_path / "f.txt", duet.music, 30.0)
    values, fps = io.load_features(tmp_path / "f.txt")
    np.testing.assert_array_equal(values, duet.music)
    assert fps == 30.0
    io.save_duet(tmp_path / "d.motion", duet)
    np.testing.assert_array_equal(io.load_features(tmp_path / "d.motion")[0], duet.music)


@pytest.mark.parametrize("mutate, match", [
    (lambda t: t.replace(io.MAGIC, "#other 1"), "magic"),
    (lambda t: t.replace("@end\n", ""), "@end"),
    (lambda t: t.replace("kind duet", "kind motion"), "motion"),
    (lambda t: t.replace("frames 32", "frames 31"), "disagree|rows"),
    (lambda t: "\n".join(t.splitlines()[:-5] + t.splitlines()[-4:]) + "\n", "rows"),
])
def test_corrupt_files_raise_format_error(duet, mutate, match):
    text = io.dumps_duet(duet)
    with pytest.raises(io.FormatError, match=match):
        io.loads_duet(mutate(text))


def test_bad_numbers_and_header_keys():
    text = io.dumps_container({"kind": "x"}, {"a": np.ones((2, 2))})
    with pytest.raises(io.FormatError):
        io.loads_container(text.replace("1 1", "1 nope", 1))
    with pytest.raises(io.FormatError):
        io.dumps_container({"bad key": 1}, {})


def test_container_keeps_shapes():
    blocks = {"a": np.arange(24.0).reshape(2, 3, 4), "b": np.zeros((0, 3)), "c": np.array(1.5)}
    _, back = io.loads_container(io.dumps_container({}, blocks))
    assert back["a"].shape == (2, 3, 4) and back["b"].shape == (0, 3)
    np.testing.assert_array_equal(back["a"], blocks["a"])
    assert back["c"].shape == (1,)


def test_mapping_and_import(tmp_path):
    (tmp_path / "map.txt").write_text("# ext internal\nHips pelvis\nHead head  # comment\n\nLHand left_wrist\n")
    mapping = io.load_mapping(tmp_path / "map.txt")
    assert mapping == {"Hips": "pelvis", "Head": "head", "LHand": "left_wrist"}
    rng = np.random.default_rng(0)
    src = rng.normal(size=(5, 3, 3))
    m = io.import_positions(src, ["Hips", "Head", "LHand"], mapping)
    g = m.global_positions()
    sk = DEFAULT_SKELETON
    np.testing.assert_allclose(g[:, sk.index("head")], src[:, 1])
    np.testing.assert_allclose(g[:, sk.index("left_wrist")], src[:, 2])
    # an unmapped joint sits on its parent
    j = sk.index("left_index1")
    np.testing.assert_allclose(g[:, j], g[:, sk.parents[j]])
    np.testing.assert_array_equal(m.rotations[..., [0, 4]], 1.0)


def test_import_errors(tmp_path):
    (tmp_path / "bad.txt").write_text("a b c\n")
    with pytest.raises(io.FormatError):
        io.load_mapping(tmp_path / "bad.txt")
    src = np.zeros((2, 2, 3))
    with pytest.raises(ValueError, match="root"):
        io.import_positions(src, ["A", "B"], {"A": "head"})
    with pytest.raises(KeyError):
        io.import_positions(src, ["A", "B"], {"C": "pelvis"})
    with pytest.raises(KeyError):
        io.import_positions(src, ["A", "B"], {"A": "tail"})
    with pytest.raises(ValueError, match="twice"):
        io.import_positions(src, ["A", "B"], {"A": "pelvis", "B": "pelvis"})


def test_module_checkpoint_with_meta(tmp_path):
    rng = np.random.default_rng(0)
    a, b = ad.Linear(3, 2, rng), ad.Linear(3, 2, np.random.default_rng(1))
    io.save_module(tmp_path / "m.ckpt", a, {"stage": "x", "shape": (3, 2)})
    io.load_module(tmp_path / "m.ckpt", b)
    np.testing.assert_array_equal(a.weight.data, b.weight.data)
    assert io.load_meta(tmp_path / "m.ckpt") == {"stage": "x", "shape": [3, 2]}
    json.loads((tmp_path / "m.ckpt.json").read_text())
    with pytest.raises(FileNotFoundError):
        io.load_meta(tmp_path / "none.ckpt")
