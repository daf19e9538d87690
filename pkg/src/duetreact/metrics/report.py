"""Table-style evaluation over sets of duets."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from ..music.features import beats_from_features
from .distribution import diversity, fid_from_features
from .features import cross_distance_features, geometric_features, kinetic_features
from .rhythm import beat_align_score, beat_echo_degree, contact_frequency, mpjpe_mpjve

COLUMNS = ("FID_k", "FID_g", "Div_k", "Div_g", "FID_cd", "Div_cd", "CF", "BED", "BAS")
ALIGNED = ("MPJPE", "MPJVE")


@dataclass
class MetricsConfig:
    delta: float = 0.10
    window: int = 3
    sigma: float = 3.0


def _div(x) -> float:
    return diversity(x) if len(x) >= 2 else float("nan")


def evaluate(pred, ref, config: MetricsConfig | None = None) -> dict[str, float]:
    """Compare generated duets against reference duets.

    Motion features use the follower; cross-distance and rhythm metrics use
    the (leader, follower) pair. MPJPE/MPJVE are added when both sets hold
    the same names with equal lengths.
    """
    cfg = config or MetricsConfig()
    if not pred or not ref:
        raise ValueError("both duet sets must be non-empty")

    def feats(duets):
        g = [(d.leader.global_positions(), d.follower.global_positions()) for d in duets]
        return (np.stack([kinetic_features(f, d.fps) for d, (_, f) in zip(duets, g)]),
                np.stack([geometric_features(f) for _, f in g]),
                np.stack([cross_distance_features(lp, f) for lp, f in g]), g)

    pk, pg, pc, pglob = feats(pred)
    rk, rg, rc, _ = feats(ref)
    bed = [beat_echo_degree(lp, f, cfg.window) for lp, f in pglob]
    bas = []
    for d, (_, f) in zip(pred, pglob):
        if d.music is not None:
            beats = beats_from_features(d.music)
            if len(beats):
                bas.append(beat_align_score(f, beats, cfg.sigma))
    out = {
        "FID_k": fid_from_features(pk, rk), "FID_g": fid_from_features(pg, rg),
        "Div_k": _div(pk), "Div_g": _div(pg),
        "FID_cd": fid_from_features(pc, rc), "Div_cd": _div(pc),
        "CF": contact_frequency(pglob, cfg.delta),
        "BED": float(np.nanmean(bed)) if np.any(np.isfinite(bed)) else float("nan"),
        "BAS": float(np.mean(bas)) if bas else float("nan"),
    }
    by_name = {d.name: d for d in ref}
    if len(by_name) == len(ref) and all(d.name in by_name and by_name[d.name].frames == d.frames for d in pred):
        errs = [mpjpe_mpjve(d.follower.global_positions(), by_name[d.name].follower.global_positions())
                for d in pred]
        out["MPJPE"] = float(np.mean([e[0] for e in errs]))
        out["MPJVE"] = float(np.mean([e[1] for e in errs]))
    return out


def to_csv(metrics: dict[str, float]) -> str:
    cols = [c for c in COLUMNS + ALIGNED if c in metrics]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    w.writerow([repr(float(metrics[c])) for c in cols])
    return buf.getvalue()


def summary(metrics: dict[str, float], title: str = "evaluation") -> str:
    lines = [title, "-" * len(title)]
    for c in COLUMNS + ALIGNED:
        if c in metrics:
            lines.append(f"{c:<8}{metrics[c]:>14.6f}")
    return "\n".join(lines) + "\n"
