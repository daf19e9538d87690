"""Text motion container, duet files, feature files and model checkpoints.

Container layout::

    #duetreact-motion 1
    kind duet
    name synth_000003
    fps 30
    joints 54
    frames 128
    skeleton smplx54
    @block leader.local_positions 128 54 3
    <one line per frame, values as %.17g>
    ...
    @end

Header lines are ``key value`` pairs. Every block lists its full shape;
the first dimension is the row count and the rest are flattened on each
row. ``%.17g`` makes float64 values round-trip exactly.
"""
from __future__ import annotations

import hashlib
import io as _io
import json
from pathlib import Path

import numpy as np

from .autodiff import checkpoint
from .motion.skeleton import DEFAULT_SKELETON, REDUCED_NAMES, Skeleton
from .motion.types import DuetSample, MotionSequence

MAGIC = "#duetreact-motion 1"
_INT_BLOCKS = {"contacts"}


class FormatError(ValueError):
    pass


# -- generic container --------------------------------------------------------
def dumps_container(header: dict, blocks: dict[str, np.ndarray]) -> str:
    out = _io.StringIO()
    out.write(MAGIC + "\n")
    for key, value in header.items():
        text = str(value)
        if not key or any(c.isspace() for c in key) or "\n" in text:
            raise FormatError(f"header entry {key!r} cannot be written")
        out.write(f"{key} {text}\n")
    for name, arr in blocks.items():
        arr = np.asarray(arr)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        out.write(f"@block {name} {' '.join(str(n) for n in arr.shape)}\n")
        rows = arr.reshape(arr.shape[0], int(np.prod(arr.shape[1:])))
        fmt = "%d" if name.split(".")[-1] in _INT_BLOCKS else "%.17g"
        if rows.shape[1]:
            np.savetxt(out, rows, fmt=fmt, delimiter=" ")
    out.write("@end\n")
    return out.getvalue()


def loads_container(text: str) -> tuple[dict, dict[str, np.ndarray]]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise FormatError("missing container magic line")
    header, blocks = {}, {}
    i = 1
    while i < len(lines) and not lines[i].startswith("@"):
        if lines[i].strip():
            key, _, value = lines[i].partition(" ")
            header[key] = value.strip()
        i += 1
    while i < len(lines):
        line = lines[i]
        if line.strip() == "@end":
            return header, blocks
        parts = line.split()
        if len(parts) < 3 or parts[0] != "@block":
            raise FormatError(f"line {i + 1}: expected '@block name dims...', got {line!r}")
        name = parts[1]
        try:
            shape = tuple(int(n) for n in parts[2:])
        except ValueError:
            raise FormatError(f"line {i + 1}: bad block shape {parts[2:]}") from None
        rows, width = shape[0], int(np.prod(shape[1:])) if len(shape) > 1 else 1
        body = lines[i + 1:i + 1 + rows]
        found = next((k for k, r in enumerate(body) if r.startswith("@")), len(body))
        if found != rows:
            raise FormatError(f"block {name!r}: expected {rows} rows, found {found}")
        try:
            data = np.array([np.array(r.split(), dtype=np.float64) for r in body]) if rows else np.zeros((0, width))
        except ValueError as exc:
            raise FormatError(f"block {name!r}: {exc}") from None
        if data.shape != (rows, width):
            raise FormatError(f"block {name!r}: rows do not hold {width} values each")
        arr = data.reshape(shape)
        if name.split(".")[-1] in _INT_BLOCKS:
            arr = arr.astype(np.uint8)
        blocks[name] = arr
        i += 1 + rows
    raise FormatError("missing @end")


# -- motions and duets --------------------------------------------------------
def _motion_blocks(prefix: str, m: MotionSequence) -> dict:
    return {f"{prefix}.local_positions": m.local_positions, f"{prefix}.rotations": m.rotations,
            f"{prefix}.root_translation": m.root_translation}


def _motion_from(blocks: dict, prefix: str, fps: float) -> MotionSequence:
    try:
        return MotionSequence(blocks[f"{prefix}.local_positions"], blocks[f"{prefix}.rotations"],
                              blocks[f"{prefix}.root_translation"], fps)
    except KeyError as exc:
        raise FormatError(f"missing block {exc.args[0]!r}") from None


def _header(kind: str, name: str, m: MotionSequence, skeleton: str) -> dict:
    return {"kind": kind, "name": name, "fps": repr(float(m.fps)), "joints": m.joints, "frames": m.frames,
            "skeleton": skeleton}


def dumps_motion(motion: MotionSequence, name: str = "motion", skeleton: str = DEFAULT_SKELETON.name) -> str:
    return dumps_container(_header("motion", name, motion, skeleton), _motion_blocks("motion", motion))


def dumps_duet(duet: DuetSample, skeleton: str = DEFAULT_SKELETON.name) -> str:
    duet.validate()
    blocks = _motion_blocks("leader", duet.leader)
    blocks.update(_motion_blocks("follower", duet.follower))
    blocks["trajectory"] = duet.trajectory
    blocks["contacts"] = np.asarray(duet.contacts, dtype=np.uint8)
    if duet.music is not None:
        blocks["music"] = duet.music
    return dumps_container(_header("duet", duet.name, duet.leader, skeleton), blocks)


def _check_header(header: dict, kind: str, path) -> float:
    if header.get("kind") != kind:
        raise FormatError(f"{path}: expected a {kind} file, found kind={header.get('kind')!r}")
    try:
        return float(header["fps"])
    except (KeyError, ValueError):
        raise FormatError(f"{path}: header lacks a numeric fps") from None


def _check_shape(m: MotionSequence, header: dict, path) -> None:
    T, J = int(header.get("frames", -1)), int(header.get("joints", -1))
    if m.local_positions.shape[:2] != (T, J) or m.rotations.shape[:2] != (T, J) or m.root_translation.shape != (T, 3):
        raise FormatError(f"{path}: block shapes disagree with header frames={T} joints={J}")


def loads_motion(text: str, path="<string>") -> MotionSequence:
    header, blocks = loads_container(text)
    m = _motion_from(blocks, "motion", _check_header(header, "motion", path))
    _check_shape(m, header, path)
    return m


def loads_duet(text: str, path="<string>") -> DuetSample:
    header, blocks = loads_container(text)
    fps = _check_header(header, "duet", path)
    lead, foll = _motion_from(blocks, "leader", fps), _motion_from(blocks, "follower", fps)
    _check_shape(lead, header, path)
    _check_shape(foll, header, path)
    if "trajectory" not in blocks or "contacts" not in blocks:
        raise FormatError(f"{path}: duet files need trajectory and contacts blocks")
    duet = DuetSample(lead, foll, blocks["trajectory"], blocks["contacts"], blocks.get("music"),
                      name=header.get("name", Path(str(path)).stem))
    n = len(REDUCED_NAMES)
    if duet.contacts.shape[1:] != (n, n):
        raise FormatError(f"{path}: contacts must be (T, {n}, {n})")
    try:
        duet.validate()
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    return duet


def save_motion(path, motion: MotionSequence, name: str | None = None) -> None:
    Path(path).write_text(dumps_motion(motion, name or Path(path).stem), encoding="utf-8")


def load_motion(path) -> MotionSequence:
    """Read a motion file; a duet file yields its leader."""
    text = Path(path).read_text(encoding="utf-8")
    header, _ = loads_container(text)
    if header.get("kind") == "duet":
        return loads_duet(text, path).leader
    return loads_motion(text, path)


def save_duet(path, duet: DuetSample) -> None:
    Path(path).write_text(dumps_duet(duet), encoding="utf-8")


def load_duet(path) -> DuetSample:
    return loads_duet(Path(path).read_text(encoding="utf-8"), path)


# -- music features -----------------------------------------------------------
def save_features(path, values: np.ndarray, fps: float) -> None:
    values = np.asarray(values, dtype=np.float64)
    header = {"kind": "features", "fps": repr(float(fps)), "frames": len(values), "channels": values.shape[1]}
    Path(path).write_text(dumps_container(header, {"music": values}), encoding="utf-8")


def load_features(path) -> tuple[np.ndarray, float]:
    header, blocks = loads_container(Path(path).read_text(encoding="utf-8"))
    if header.get("kind") == "duet":
        if "music" not in blocks:
            raise FormatError(f"{path}: duet file carries no music block")
        return blocks["music"], float(header["fps"])
    fps = _check_header(header, "features", path)
    if "music" not in blocks:
        raise FormatError(f"{path}: missing music block")
    return blocks["music"], fps


# -- importer -----------------------------------------------------------------
def load_mapping(path) -> dict[str, str]:
    """Two-column text table: ``external_name internal_name`` per line, ``#`` comments."""
    mapping = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise FormatError(f"{path}:{n}: expected two names, got {line!r}")
        mapping[parts[0]] = parts[1]
    return mapping


def import_positions(positions, names: list[str], mapping: dict[str, str], fps: float = 30.0,
                     skeleton: Skeleton = DEFAULT_SKELETON) -> MotionSequence:
    """Map an external joint set onto the internal skeleton.

    ``positions`` is (T, K, 3) global positions with one name per column.
    Internal joints with no source take their parent's position, so bone
    lengths to unmapped joints are zero. Rotations are left at identity:
    position-only sources carry no orientation.
    """
    p = np.asarray(positions, dtype=np.float64)
    if p.ndim != 3 or p.shape[1] != len(names) or p.shape[2] != 3:
        raise ValueError(f"positions {p.shape} do not match {len(names)} joint names")
    col = {n: i for i, n in enumerate(names)}
    target = {}
    for ext, internal in mapping.items():
        if ext not in col:
            raise KeyError(f"mapped joint {ext!r} is not in the source")
        if internal not in skeleton.names:
            raise KeyError(f"{internal!r} is not a joint of skeleton {skeleton.name}")
        if internal in target:
            raise ValueError(f"internal joint {internal!r} is mapped twice")
        target[internal] = col[ext]
    root = skeleton.names[0]
    if root not in target:
        raise ValueError(f"the root joint {root!r} must be mapped")
    out = np.empty((p.shape[0], skeleton.joint_count, 3))
    for j, name in enumerate(skeleton.names):
        out[:, j] = p[:, target[name]] if name in target else out[:, skeleton.parents[j]]
    trans = out[:, 0].copy()
    rot = np.zeros((p.shape[0], skeleton.joint_count, 6))
    rot[..., 0] = rot[..., 4] = 1.0
    return MotionSequence(out - trans[:, None], rot, trans, fps)


# -- checkpoints and hashes ---------------------------------------------------
def save_module(path, module, meta: dict | None = None) -> None:
    """Parameters and buffers, plus a JSON sidecar with ``meta``."""
    path = Path(path)
    checkpoint.save(path, module.state_dict())
    if meta is not None:
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=list),
                                                          encoding="utf-8")


def load_module(path, module) -> None:
    module.load_state_dict(checkpoint.load(path))


def load_meta(path) -> dict:
    side = Path(path).with_suffix(Path(path).suffix + ".json")
    if not side.exists():
        raise FileNotFoundError(f"{side} is missing")
    return json.loads(side.read_text(encoding="utf-8"))


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
