import csv
import io as _io
import json
import subprocess
import sys

import numpy as np
import pytest

from duetreact import cli, io
from duetreact.config import RunConfig, apply_overrides, parse_config
from duetreact.metrics import evaluate


def tiny(run_dir, *extra):
    return ["--profile", "tiny", "--run", str(run_dir), *extra]


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """A tiny run with every stage trained."""
    run_dir = tmp_path_factory.mktemp("run")
    assert cli.run(["synth-data", *tiny(run_dir)]) == 0
    for stage in ("vq", "aux", "music", "diffusion"):
        assert cli.run(["train", stage, *tiny(run_dir)]) == 0, stage
    return run_dir


def test_synth_data_is_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.run(["synth-data", *tiny(a)]) == 0
    assert cli.run(["synth-data", *tiny(b)]) == 0
    ma = json.loads((a / "data" / "manifest.json").read_text())
    mb = json.loads((b / "data" / "manifest.json").read_text())
    assert ma["files"] == mb["files"] and len(ma["files"]) == 4
    assert ma["config_hash"] == mb["config_hash"]
    assert cli.run(["synth-data", *tiny(tmp_path / "c", "--seed", "1")]) == 0
    mc = json.loads((tmp_path / "c" / "data" / "manifest.json").read_text())
    assert set(mc["files"].values()).isdisjoint(ma["files"].values())


def test_empty_dataset(tmp_path):
    ini = tmp_path / "zero.ini"
    ini.write_text("[data]\ncount = 0\n")
    assert cli.run(["synth-data", "--config", str(ini), *tiny(tmp_path)]) == 0
    assert json.loads((tmp_path / "data" / "index.json").read_text()) == {"files": [], "count": 0}
    assert cli.run(["train", "vq", "--config", str(ini), *tiny(tmp_path)]) == 1


def test_missing_stage_checkpoint(tmp_path, capsys):
    assert cli.run(["synth-data", *tiny(tmp_path)]) == 0
    assert cli.run(["train", "diffusion", *tiny(tmp_path)]) == 1
    assert "stage 'vq' has not been trained" in capsys.readouterr().err


def test_loss_history_rows(trained):
    cfg = parse_config("", "tiny")
    rows = list(csv.DictReader(_io.StringIO((trained / "loss_vq.csv").read_text())))
    assert len(rows) == cfg.vq.epochs
    assert [int(r["epoch"]) for r in rows] == list(range(cfg.vq.epochs))
    rows = list(csv.DictReader(_io.StringIO((trained / "loss_diffusion.csv").read_text())))
    assert len(rows) == cfg.diffusion.epochs
    m = json.loads((trained / "manifest_train_vq.json").read_text())
    assert m["outputs"]["vq.ckpt"] == io.file_sha256(trained / "checkpoints" / "vq.ckpt")


def test_sample_and_replay(trained, tmp_path):
    leader = sorted((trained / "data").glob("*.motion"))[0]
    wav = leader.with_suffix(".wav")
    out = tmp_path / "gen" / "a.motion"
    assert cli.run(["sample", *tiny(trained), "--leader", str(leader), "--audio", str(wav), "--out", str(out)]) == 0
    duet = io.load_duet(out)
    src = io.load_duet(leader)
    assert duet.frames == src.frames and duet.name == src.name
    manifest_path = tmp_path / "gen" / "a.motion.manifest.json"
    m = json.loads(manifest_path.read_text())
    cfg = apply_overrides(RunConfig(), m["config"])
    assert len(m["trace"]) == len(m["timesteps"]) == cfg.sampling.steps
    np.testing.assert_allclose(cli.replay_trace(cfg, m), m["trace"], rtol=1e-9, atol=1e-12)
    assert cli.run(["sample", "--replay", str(manifest_path)]) == 0
    again = json.loads((tmp_path / "gen" / "a.replay.motion.manifest.json").read_text())
    assert again["reproduced"] and again["output_sha256"] == m["output_sha256"]


def test_lambda_zero_matches_no_guidance(trained, tmp_path):
    leader = sorted((trained / "data").glob("*.motion"))[1]
    wav = leader.with_suffix(".wav")
    common = ["sample", *tiny(trained), "--leader", str(leader), "--audio", str(wav)]
    assert cli.run([*common, "--out", str(tmp_path / "a.motion"), "--lambda-c", "0"]) == 0
    assert cli.run([*common, "--out", str(tmp_path / "b.motion"), "--no-guidance"]) == 0
    assert io.file_sha256(tmp_path / "a.motion") == io.file_sha256(tmp_path / "b.motion")


def test_sample_input_errors(trained, tmp_path):
    leader = sorted((trained / "data").glob("*.motion"))[0]
    base = ["sample", *tiny(trained), "--out", str(tmp_path / "x.motion")]
    assert cli.run([*base, "--leader", str(leader)]) == 1
    assert cli.run([*base, "--leader", str(tmp_path / "none.motion"), "--audio", str(leader)]) == 1
    feats = tmp_path / "short.txt"
    io.save_features(feats, np.zeros((10, 54)), 30.0)
    assert cli.run([*base, "--leader", str(leader), "--audio", str(feats)]) == 1
    assert cli.run([*base, "--leader", str(leader), "--audio", str(leader), "--steps", "0"]) == 1


def test_eval_matches_library(trained, tmp_path, capsys):
    data = trained / "data"
    assert cli.run(["eval", *tiny(tmp_path), "--pred", str(data), "--ref", str(data)]) == 0
    assert "FID_k" in capsys.readouterr().out
    rows = list(csv.DictReader(_io.StringIO((tmp_path / "report.csv").read_text())))
    duets = [io.load_duet(p) for p in sorted(data.glob("*.motion"))]
    expected = evaluate(duets, duets, parse_config("", "tiny").metrics_config())
    for key, value in rows[0].items():
        assert float(value) == pytest.approx(expected[key], rel=1e-12, abs=1e-12)


def test_eval_schema_errors(trained, tmp_path, capsys):
    bad = tmp_path / "bad"
    bad.mkdir()
    (bad / "broken.motion").write_text("not a motion file\n")
    assert cli.run(["eval", *tiny(tmp_path), "--pred", str(bad), "--ref", str(trained / "data")]) == 1
    assert "broken.motion" in capsys.readouterr().err
    assert cli.run(["eval", *tiny(tmp_path), "--pred", str(tmp_path / "none"), "--ref", str(bad)]) == 1


def test_config_errors(tmp_path):
    assert cli.run(["synth-data", "--config", str(tmp_path / "missing.ini"), *tiny(tmp_path)]) == 1
    bad = tmp_path / "bad.ini"
    bad.write_text("[vq]\nmode = shared\n")
    assert cli.run(["train", "vq", "--config", str(bad), *tiny(tmp_path)]) == 1
    assert cli.run(["synth-data", "--profile", "huge", "--run", str(tmp_path)]) == 1


def test_runtime_failure_exit_code(tmp_path, monkeypatch):
    def boom(cfg):
        raise RuntimeError("disk on fire")

    monkeypatch.setattr(cli, "cmd_synth_data", boom)
    assert cli.run(["synth-data", *tiny(tmp_path)]) == 2


def test_selftest_reports_each_check():
    out = _io.StringIO()
    ok = cli.cmd_selftest({"fine": lambda: (True, "ok"), "broken": lambda: 1 / 0}, stream=out)
    lines = out.getvalue().splitlines()
    assert not ok
    assert any(line.startswith("PASS") and "fine" in line for line in lines)
    assert any(line.startswith("FAIL") and "broken" in line for line in lines)


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "duetreact", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "synth-data" in res.stdout
