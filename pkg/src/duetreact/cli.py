"""Command-line entry point.

    duetreact synth-data --config run.ini
    duetreact train vq|aux|music|diffusion --config run.ini
    duetreact sample --config run.ini --leader L.motion --audio A.wav --out F.motion
    duetreact sample --replay F.motion.manifest.json
    duetreact eval --pred DIR --ref DIR
    duetreact selftest

Every command writes a JSON manifest next to its outputs. Exit codes: 0 on
success, 1 for invalid input or configuration, 2 for runtime failures.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, io
from . import autodiff as ad
from .config import ConfigError, RunConfig, apply_overrides, load_config, parse_config
from .motion.ops import compute_relative_trajectory
from .motion.types import DuetSample
from .music.features import extract_features, read_wav, write_wav

log = logging.getLogger("duetreact")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
STAGE_FILES = {"vq": ["vq.ckpt"], "aux": ["trajectory.ckpt", "contact.ckpt"], "music": ["music.json"],
               "diffusion": ["diffusion.ckpt"]}


class ValidationError(Exception):
    """Bad user input; maps to exit code 1."""


class MissingStageError(ValidationError):
    def __init__(self, stage: str, path: Path):
        super().__init__(f"stage {stage!r} has not been trained: {path} is missing")
        self.stage = stage


# -- run directory helpers ----------------------------------------------------
def _build_id() -> str:
    from . import _kernels

    return f"duetreact {__version__} ({_kernels.BACKEND}) numpy {np.__version__} python {platform.python_version()}"


def _data_dir(cfg: RunConfig) -> Path:
    return Path(cfg.run.output) / "data"


def _ckpt_dir(cfg: RunConfig) -> Path:
    return Path(cfg.run.output) / "checkpoints"


def _manifest(cfg: RunConfig, command: str, **extra) -> dict:
    return {"command": command, "config_hash": cfg.digest(), "config": cfg.to_dict(), "seed": cfg.run.seed,
            "build": _build_id(), **extra}


def _write_json(path: Path, obj: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=list) + "\n", encoding="utf-8")


def _prepare_dir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ValidationError(f"cannot create {path}: {exc.strerror}") from None
    probe = path / ".write-test"
    try:
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ValidationError(f"{path} is not writable: {exc.strerror}") from None
    return path


def _require(cfg: RunConfig, stage: str) -> list[Path]:
    paths = [_ckpt_dir(cfg) / name for name in STAGE_FILES[stage]]
    for p in paths:
        if not p.exists():
            raise MissingStageError(stage, p)
    return paths


def load_dataset(directory: Path) -> list[DuetSample]:
    index = directory / "index.json"
    if not index.exists():
        raise ValidationError(f"{directory} has no index.json; run synth-data first")
    names = json.loads(index.read_text(encoding="utf-8"))["files"]
    return [io.load_duet(directory / n) for n in names]


def _write_history(path: Path, history: list[dict]) -> None:
    if not history:
        path.write_text("", encoding="utf-8")
        return
    keys = list(history[0])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for row in history:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


# -- model reconstruction -----------------------------------------------------
def build_stage1(cfg: RunConfig):
    from .diffusion import Stage1
    from .vq import ContactVQ, PartFusionVQ, TrajectoryVQ

    vq_path, traj_path, contact_path = _require(cfg, "vq") + _require(cfg, "aux")
    rng = np.random.default_rng(0)  # overwritten by the checkpoint
    motion = PartFusionVQ(cfg.vq_config(), rng)
    traj, contact = TrajectoryVQ(cfg.aux_config(), rng), ContactVQ(cfg.aux_config(), rng)
    for path, module in ((vq_path, motion), (traj_path, traj), (contact_path, contact)):
        try:
            io.load_module(path, module)
        except (KeyError, ValueError) as exc:
            raise ValidationError(f"{path} does not match the configured architecture: {exc}") from None
    return Stage1(motion, traj, contact)


def build_diffusion(cfg: RunConfig):
    from .diffusion import RCDiff

    (path,) = _require(cfg, "diffusion")
    model = RCDiff(cfg.diffusion_config(), np.random.default_rng(0))
    try:
        io.load_module(path, model)
    except (KeyError, ValueError) as exc:
        raise ValidationError(f"{path} does not match the configured architecture: {exc}") from None
    return model


# -- commands -----------------------------------------------------------------
def cmd_synth_data(cfg: RunConfig) -> dict:
    from .motion.synth import synth_duet

    out = _prepare_dir(_data_dir(cfg))
    sc = cfg.synth_config()
    files = []
    for k in range(cfg.data.count):
        duet = synth_duet(sc, seed=cfg.run.seed * 1_000_003 + k)
        name = f"{duet.name}.motion"
        io.save_duet(out / name, duet)
        write_wav(out / f"{duet.name}.wav", duet.waveform, duet.sample_rate)
        files.append(name)
    _write_json(out / "index.json", {"files": files, "count": len(files)})
    manifest = _manifest(cfg, "synth-data", files={n: io.file_sha256(out / n) for n in files})
    _write_json(out / "manifest.json", manifest)
    return manifest


def cmd_train(cfg: RunConfig, stage: str) -> dict:
    from .vq import train_contact_vq, train_trajectory_vq, train_vq

    ckpt = _prepare_dir(_ckpt_dir(cfg))
    seed = cfg.run.seed
    if stage == "diffusion":
        stage1 = build_stage1(cfg)
        duets = load_dataset(_data_dir(cfg))
        _require(cfg, "music")
    else:
        duets = load_dataset(_data_dir(cfg))
    if not duets:
        raise ValidationError("the dataset is empty")
    t0 = time.time()
    outputs, histories = {}, {}
    if stage == "vq":
        res = train_vq([d.follower for d in duets] + [d.leader for d in duets], cfg.vq_train_config(),
                       cfg.vq_config(), seed)
        io.save_module(ckpt / "vq.ckpt", res.model, {"vq": dataclasses.asdict(cfg.vq_config())})
        histories["vq"] = res.history
    elif stage == "aux":
        for name, fn in (("trajectory", train_trajectory_vq), ("contact", train_contact_vq)):
            res = fn(duets, cfg.aux_train_config(), cfg.aux_config(), seed)
            io.save_module(ckpt / f"{name}.ckpt", res.model, {"aux": dataclasses.asdict(cfg.aux_config())})
            histories[name] = res.history
    elif stage == "music":
        # the encoder trains with the diffusion model; this stage pins the features it will see
        report = {}
        for d in duets:
            wav = _data_dir(cfg) / f"{d.name}.wav"
            if not wav.exists():
                raise ValidationError(f"{wav} is missing")
            wave, rate = read_wav(wav)
            feats = extract_features(wave, rate, d.fps, frames=d.frames).values
            report[d.name] = {"max_abs_diff": float(np.max(np.abs(feats - d.music))) if d.music is not None else None}
        _write_json(ckpt / "music.json", {"features": report, "dim": int(duets[0].music.shape[1])})
        histories["music"] = []
    elif stage == "diffusion":
        from .diffusion import train_diffusion

        res = train_diffusion(duets, stage1, cfg.diffusion_train_config(), cfg.diffusion_config(), seed)
        io.save_module(ckpt / "diffusion.ckpt", res.model, {"diffusion": cfg.to_dict()["diffusion"]})
        histories["diffusion"] = res.history
    else:
        raise ValidationError(f"unknown stage {stage!r}")
    for name, hist in histories.items():
        if hist:
            path = Path(cfg.run.output) / f"loss_{name}.csv"
            _write_history(path, hist)
            outputs[f"loss_{name}"] = str(path)
    for fname in STAGE_FILES[stage]:
        outputs[fname] = io.file_sha256(ckpt / fname)
    final = {k: v[-1] for k, v in histories.items() if v}
    manifest = _manifest(cfg, f"train {stage}", stage=stage, outputs=outputs, final=final,
                         seconds=round(time.time() - t0, 3))
    _write_json(Path(cfg.run.output) / f"manifest_train_{stage}.json", manifest)
    return manifest


def _load_music(path: Path, frames: int, fps: float) -> np.ndarray:
    if path.suffix.lower() == ".wav":
        wave, rate = read_wav(path)
        return extract_features(wave, rate, fps, frames=frames).values
    values, f_fps = io.load_features(path)
    if abs(f_fps - fps) > 1e-9:
        raise ValidationError(f"{path} is at {f_fps} fps but the leader is at {fps}")
    return values


def cmd_sample(cfg: RunConfig, leader_path: Path, audio_path: Path, out_path: Path) -> dict:
    from .diffusion import react

    stage1 = build_stage1(cfg)
    model = build_diffusion(cfg)
    try:
        leader = io.load_motion(leader_path)
    except FileNotFoundError:
        raise ValidationError(f"{leader_path} does not exist") from None
    if not audio_path.exists():
        raise ValidationError(f"{audio_path} does not exist")
    music = _load_music(audio_path, leader.frames, leader.fps)
    if len(music) != leader.frames:
        raise ValidationError(f"audio gives {len(music)} frames but the leader has {leader.frames}")
    s = cfg.sampling
    r = react(model, stage1, leader, music, lam=s.lambda_c, steps=s.steps, seed=s.seed, guidance=s.guidance,
              guidance_mode=s.guidance_mode, max_grad_norm=s.max_grad_norm, record=True)
    duet = DuetSample(leader, r.follower, compute_relative_trajectory(leader.root_translation,
                                                                      r.follower.root_translation),
                      r.contacts, music, name=leader_path.stem)
    _prepare_dir(out_path.parent)
    io.save_duet(out_path, duet)
    inter = out_path.with_suffix(out_path.suffix + ".steps.npz")
    np.savez(inter, x0=np.stack(r.sample.x0_history), timesteps=r.sample.timesteps, latent=r.latent)
    manifest = _manifest(cfg, "sample", leader=str(leader_path), leader_sha256=io.file_sha256(leader_path),
                         audio=str(audio_path), audio_sha256=io.file_sha256(audio_path), output=str(out_path),
                         output_sha256=io.file_sha256(out_path), intermediates=str(inter),
                         timesteps=[int(t) for t in r.sample.timesteps], trace=r.sample.trace,
                         grad_norms=r.sample.grad_norms)
    _write_json(Path(str(out_path) + ".manifest.json"), manifest)
    return manifest


def replay_trace(cfg: RunConfig, manifest: dict) -> np.ndarray:
    """Recompute the per-step guidance loss from the saved intermediates."""
    from .diffusion import contact_guidance_loss

    stage1 = build_stage1(cfg)
    model = build_diffusion(cfg)
    leader = io.load_motion(manifest["leader"])
    f = stage1.downsample
    Tp = -(-leader.frames // f) * f
    g = leader.global_positions()
    g = np.concatenate([g, np.repeat(g[-1:], Tp - len(g), axis=0)]) if Tp > len(g) else g
    x0 = np.load(manifest["intermediates"])["x0"]
    with ad.no_grad():
        return np.array([contact_guidance_loss(model.denormalize_x(ad.Tensor(x)), g, stage1,
                                               cfg.sampling.guidance_mode)[0].item() for x in x0])


def cmd_replay(manifest_path: Path, out_path: Path | None = None) -> dict:
    """Re-run a recorded sample and compare output hashes."""
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read manifest {manifest_path}: {exc}") from None
    if manifest.get("command") != "sample":
        raise ValidationError(f"{manifest_path} is not a sample manifest")
    cfg = RunConfig()
    apply_overrides(cfg, manifest["config"])
    cfg.validate()
    if cfg.digest() != manifest["config_hash"]:
        raise ValidationError("manifest config does not reproduce its recorded hash")
    for key in ("leader", "audio"):
        if io.file_sha256(manifest[key]) != manifest[f"{key}_sha256"]:
            raise ValidationError(f"{manifest[key]} changed since the recorded run")
    orig = Path(manifest["output"])
    out = out_path or orig.with_name(orig.stem + ".replay" + orig.suffix)
    again = cmd_sample(cfg, Path(manifest["leader"]), Path(manifest["audio"]), out)
    again["replay_of"] = str(manifest_path)
    again["reproduced"] = again["output_sha256"] == manifest["output_sha256"]
    _write_json(Path(str(out) + ".manifest.json"), again)
    return again


def cmd_eval(cfg: RunConfig, pred_dir: Path, ref_dir: Path) -> dict:
    from .metrics import evaluate, summary, to_csv

    def gather(d: Path):
        if not d.is_dir():
            raise ValidationError(f"{d} is not a directory")
        files = sorted(p for p in d.glob("*.motion") if ".replay" not in p.name)
        if not files:
            raise ValidationError(f"{d} holds no .motion files")
        duets, bad = [], []
        for p in files:
            try:
                duets.append(io.load_duet(p))
            except (io.FormatError, ValueError) as exc:
                bad.append(f"{p.name}: {exc}")
        if bad:
            raise ValidationError("schema mismatch:\n  " + "\n  ".join(bad))
        return duets, files

    pred, pfiles = gather(pred_dir)
    ref, rfiles = gather(ref_dir)
    shapes = {(d.leader.joints, d.contacts.shape[1:]) for d in pred + ref}
    if len(shapes) != 1:
        raise ValidationError(f"joint or contact layouts differ across files: {sorted(map(str, shapes))}")
    metrics = evaluate(pred, ref, cfg.metrics_config())
    out = _prepare_dir(Path(cfg.run.output))
    (out / "report.csv").write_text(to_csv(metrics), encoding="utf-8")
    (out / "report.txt").write_text(summary(metrics), encoding="utf-8")
    manifest = _manifest(cfg, "eval", pred=str(pred_dir), ref=str(ref_dir), metrics=metrics,
                         pred_files={p.name: io.file_sha256(p) for p in pfiles},
                         ref_files={p.name: io.file_sha256(p) for p in rfiles})
    _write_json(out / "manifest_eval.json", manifest)
    return manifest


def selftest_checks() -> dict:
    """name -> callable returning (ok, detail)."""
    from .autodiff.gradcheck import run_all
    from .diffusion import cosine_schedule, epsilon_from_x0, forward_diffuse, guided_ddim_sample
    from .metrics import GaussianStats, beat_align_from_beats, fid, fid_from_features, mpjpe_mpjve
    from .vq import quantize

    def grads():
        worst = run_all(points=5)
        bad = {k: v for k, v in worst.items() if v > 1e-4}
        return not bad, (f"failed ops: {', '.join(sorted(bad))}" if bad else f"{len(worst)} ops, worst {max(worst.values()):.1e}")

    def quantizer():
        rng = np.random.default_rng(1)
        mism = 0
        for K in (16, 64, 256):
            book = rng.normal(size=(K, 8))
            z = rng.normal(size=(200, 8))
            ref = np.argmin(((z[:, None] - book[None]) ** 2).sum(-1), axis=1)
            mism += int(np.sum(quantize(z, book).indices != ref))
        return mism == 0, f"{mism} mismatches"

    def diffusion():
        sched = cosine_schedule(1000)
        rng = np.random.default_rng(2)
        x0, eps = rng.normal(size=(4, 6)), rng.normal(size=(4, 6))
        err = max(np.abs(epsilon_from_x0(forward_diffuse(x0, t, eps, sched), x0, t, sched) - eps).max()
                  for t in (1, 250, 500, 750, 999))

        def predict(x, y, t):
            return ad.as_tensor(x) * 0.5

        a = guided_ddim_sample(predict, np.zeros((3, 1)), (3, 2), sched, 10, seed=5).x
        b = guided_ddim_sample(predict, np.zeros((3, 1)), (3, 2), sched, 10, seed=5).x
        return err <= 1e-12 and np.array_equal(a, b), f"round-trip {err:.1e}, replay {'equal' if np.array_equal(a, b) else 'differs'}"

    def metrics():
        rng = np.random.default_rng(3)
        A = rng.normal(size=(50, 4))
        mu, I = np.zeros(3), np.eye(3)
        shift = fid(GaussianStats(mu, I), GaussianStats(mu + np.array([1.0, 0, 0]), I))
        bas = beat_align_from_beats(np.array([10]), np.array([13]), 3.0)
        p = rng.normal(size=(5, 4, 3))
        e = mpjpe_mpjve(p + np.array([0.01, 0, 0]), p)
        ok = (fid_from_features(A, A) <= 1e-6 and abs(shift - 1) <= 1e-6
              and abs(bas - np.exp(-0.5)) <= 1e-9 and abs(e[0] - 10.0) < 1e-9 and e[1] == 0.0)
        return ok, f"shift FID {shift:.9f}, BAS {bas:.12f}, MPJPE {e[0]:.6f}"

    return {"gradients": grads, "quantizer": quantizer, "diffusion": diffusion, "metrics": metrics}


def cmd_selftest(checks: dict | None = None, stream=sys.stdout) -> bool:
    ok_all = True
    for name, check in (checks or selftest_checks()).items():
        t0 = time.time()
        try:
            ok, detail = check()
        except Exception as exc:  # a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        ok_all &= bool(ok)
        print(f"{'PASS' if ok else 'FAIL'} {name:<10} {detail} ({time.time() - t0:.1f}s)", file=stream)
    return ok_all


# -- argument parsing ---------------------------------------------------------
def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="duetreact", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=_build_id())
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", type=Path, help="INI file; omitted keys keep their defaults")
        sp.add_argument("--profile", default="desk", help="desk, paper-scale or tiny")
        sp.add_argument("--run", type=Path, help="run directory (overrides [run] output)")
        sp.add_argument("--seed", type=int, help="root seed (overrides [run] seed)")
        return sp

    with_config(sub.add_parser("synth-data", help="write a synthetic duet dataset"))
    t = with_config(sub.add_parser("train", help="train one stage"))
    t.add_argument("stage", choices=list(STAGE_FILES))
    t.add_argument("--mode", choices=["single", "separate", "fused"], help="motion VQ ablation mode")

    d = RunConfig().sampling
    s = sub.add_parser("sample", help="generate a follower for a leader motion")
    with_config(s)
    s.add_argument("--leader", type=Path)
    s.add_argument("--audio", type=Path, help="16-bit WAV or a feature file")
    s.add_argument("--out", type=Path)
    s.add_argument("--lambda-c", type=float, help=f"guidance weight (default {d.lambda_c})")
    s.add_argument("--steps", type=int, help=f"DDIM steps (default {d.steps})")
    s.add_argument("--sample-seed", type=int, help=f"sampler seed (default {d.seed})")
    s.add_argument("--no-guidance", action="store_true", help="disable contact guidance")
    s.add_argument("--replay", type=Path, help="re-run a recorded sample manifest and compare hashes")

    e = with_config(sub.add_parser("eval", help="metric report for generated vs reference duets"))
    e.add_argument("--pred", type=Path, required=True)
    e.add_argument("--ref", type=Path, required=True)
    sub.add_parser("selftest", help="run the built-in correctness checks")
    return p


def _resolve(args) -> RunConfig:
    overrides: dict = {}
    if args.run is not None:
        overrides.setdefault("run", {})["output"] = str(args.run)
    if args.seed is not None:
        overrides.setdefault("run", {})["seed"] = args.seed
    if getattr(args, "mode", None):
        overrides.setdefault("vq", {})["mode"] = args.mode
    if args.command == "sample":
        smp = overrides.setdefault("sampling", {})
        if args.lambda_c is not None:
            smp["lambda_c"] = args.lambda_c
        if args.steps is not None:
            smp["steps"] = args.steps
        if args.sample_seed is not None:
            smp["seed"] = args.sample_seed
        if args.no_guidance:
            smp["guidance"] = False
    cfg = load_config(args.config, args.profile)
    apply_overrides(cfg, overrides)
    cfg.validate()
    return cfg


def run(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "selftest":
            return EXIT_OK if cmd_selftest() else EXIT_RUNTIME
        if args.command == "sample" and args.replay is not None:
            m = cmd_replay(args.replay, args.out)
            print(f"replay {'reproduced' if m['reproduced'] else 'DIFFERS from'} {m['replay_of']}: {m['output']}")
            return EXIT_OK if m["reproduced"] else EXIT_RUNTIME
        cfg = _resolve(args)
        if args.config is not None and not args.config.exists():
            raise ValidationError(f"{args.config} does not exist")
        if args.command == "synth-data":
            m = cmd_synth_data(cfg)
            print(f"wrote {len(m['files'])} duets to {_data_dir(cfg)}")
        elif args.command == "train":
            m = cmd_train(cfg, args.stage)
            print(f"trained {args.stage}: {json.dumps(m['final'], default=float)}")
        elif args.command == "sample":
            missing = [n for n in ("leader", "audio", "out") if getattr(args, n) is None]
            if missing:
                raise ValidationError("sample needs --" + ", --".join(missing))
            m = cmd_sample(cfg, args.leader, args.audio, args.out)
            print(f"wrote {m['output']} (sha256 {m['output_sha256'][:12]})")
        elif args.command == "eval":
            m = cmd_eval(cfg, args.pred, args.ref)
            from .metrics import summary

            print(summary(m["metrics"]), end="")
        return EXIT_OK
    except (ValidationError, ConfigError, io.FormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:
        log.debug("runtime failure", exc_info=True)
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run())


__all__ = ["run", "main", "cmd_synth_data", "cmd_train", "cmd_sample", "cmd_replay", "cmd_eval", "cmd_selftest",
           "replay_trace", "load_dataset", "build_stage1", "build_diffusion", "parse_config"]


if __name__ == "__main__":
    main()
