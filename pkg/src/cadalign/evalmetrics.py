"""Alignment accuracy and retrieval-aware alignment accuracy.

An alignment is correct when the class matches and translation, rotation
and scale errors are within 20 cm, 20 degrees and 20 % (inclusive).
Predictions are first deduplicated by a greedy world-space clustering.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError
from .geometry import Pose9DoF, is_rotation, rot_z

log = logging.getLogger(__name__)

TRANS_THRESH = 0.20
ROT_THRESH_DEG = 20.0
SCALE_THRESH = 0.20
# absorbs float round-off at the inclusive boundaries
BOUNDARY_EPS = 1e-9
DEFAULT_TAU = 0.4

SYMMETRY_GROUPS = {
    "none": [np.eye(3)],
    "2-fold": [np.eye(3), rot_z(np.pi)],
    "4-fold": [rot_z(k * np.pi / 2) for k in range(4)],
}
SYMMETRIES = (*SYMMETRY_GROUPS, "rotational")


@dataclass(frozen=True)
class Prediction:
    scene: str
    category: str
    pose: Pose9DoF
    confidence: float = 1.0
    cad_id: str | None = None
    id: str = ""

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise InputError(f"confidence {self.confidence} outside [0, 1]")

    def sort_key(self):
        return (-self.confidence, self.id, tuple(self.pose.t))


@dataclass(frozen=True)
class GtObject:
    scene: str
    category: str
    pose: Pose9DoF
    cad_id: str | None = None
    symmetry: str = "none"
    id: str = ""

    def __post_init__(self):
        if self.symmetry not in SYMMETRIES:
            raise InputError(f"unknown symmetry class {self.symmetry!r}")

    def sort_key(self):
        return (self.id, self.category, self.cad_id or "", tuple(self.pose.t))


def rotation_error(R_pred, R_gt, symmetry: str = "none") -> float:
    """Geodesic rotation error in degrees, minimized over the object's symmetry group."""
    R_pred = np.asarray(R_pred, dtype=float)
    R_gt = np.asarray(R_gt, dtype=float)
    if not (is_rotation(R_pred) and is_rotation(R_gt)):
        raise InputError("rotation_error needs two rotation matrices")
    M = R_gt.T @ R_pred
    if symmetry == "rotational":
        # best yaw about the canonical z axis, in closed form
        best = M[2, 2] + np.hypot(M[0, 0] + M[1, 1], M[0, 1] - M[1, 0])
    elif symmetry in SYMMETRY_GROUPS:
        best = max(np.trace(M @ S) for S in SYMMETRY_GROUPS[symmetry])
    else:
        raise InputError(f"unknown symmetry class {symmetry!r}")
    return float(np.degrees(np.arccos(np.clip((best - 1.0) / 2.0, -1.0, 1.0))))


def scale_error(s_pred, s_gt) -> float:
    return float(np.mean(np.abs(np.asarray(s_pred) / np.asarray(s_gt) - 1.0)))


def is_alignment_correct(pred: Prediction, gt: GtObject) -> bool:
    if pred.category != gt.category:
        return False
    if np.linalg.norm(pred.pose.t - gt.pose.t) > TRANS_THRESH + BOUNDARY_EPS:
        return False
    if rotation_error(pred.pose.R, gt.pose.R, gt.symmetry) > ROT_THRESH_DEG + BOUNDARY_EPS:
        return False
    return scale_error(pred.pose.s, gt.pose.s) <= SCALE_THRESH + BOUNDARY_EPS


def cluster_world(preds, tau: float = DEFAULT_TAU) -> list[Prediction]:
    """Greedy confidence-ordered clustering per (scene, category); keeps each cluster's top member."""
    groups: dict[tuple[str, str], list[Prediction]] = {}
    for p in preds:
        groups.setdefault((p.scene, p.category), []).append(p)
    out = []
    for key in sorted(groups):
        reps: list[Prediction] = []
        for p in sorted(groups[key], key=Prediction.sort_key):
            if all(np.linalg.norm(p.pose.t - r.pose.t) > tau for r in reps):
                reps.append(p)
        out.extend(reps)
    return out


@dataclass
class ScoreTable:
    per_class: dict[str, float]
    counts: dict[str, tuple[int, int]]
    class_avg: float
    instance_avg: float

    def to_dict(self) -> dict:
        return {
            "per_class": dict(sorted(self.per_class.items())),
            "counts": {k: list(v) for k, v in sorted(self.counts.items())},
            "class_avg": self.class_avg,
            "instance_avg": self.instance_avg,
        }


def table_from_counts(counts: dict[str, tuple[int, int]]) -> ScoreTable:
    counts = dict(sorted(counts.items()))
    per_class = {c: m / n for c, (m, n) in counts.items() if n > 0}
    matched = sum(m for m, _ in counts.values())
    total = sum(n for _, n in counts.values())
    class_avg = math.fsum(per_class.values()) / len(per_class) if per_class else 0.0
    return ScoreTable(per_class, counts, class_avg, matched / total if total else 0.0)


def match_and_score(
    preds,
    gts,
    retrieval_aware: bool = False,
    cad_pools: dict[str, set[str]] | None = None,
) -> ScoreTable:
    """Greedy confidence-ordered matching of predictions to ground truth, scene by scene."""
    gt_by_scene: dict[str, list[GtObject]] = {}
    for g in gts:
        gt_by_scene.setdefault(g.scene, []).append(g)
    pred_by_scene: dict[str, list[Prediction]] = {}
    for p in preds:
        pred_by_scene.setdefault(p.scene, []).append(p)

    counts: dict[str, list[int]] = {}
    for g in gts:
        counts.setdefault(g.category, [0, 0])[1] += 1

    for scene, scene_gts in gt_by_scene.items():
        scene_gts = sorted(scene_gts, key=GtObject.sort_key)
        scene_preds = sorted(pred_by_scene.get(scene, []), key=Prediction.sort_key)
        if len(scene_preds) > len(scene_gts):
            log.warning(
                "scene %s: %d predictions for %d GT objects; dropping the lowest-confidence ones",
                scene, len(scene_preds), len(scene_gts),
            )
            scene_preds = scene_preds[: len(scene_gts)]
        matched = [False] * len(scene_gts)
        pool = None if cad_pools is None else cad_pools.get(scene)
        for p in scene_preds:
            for i, g in enumerate(scene_gts):
                if matched[i] or not is_alignment_correct(p, g):
                    continue
                if retrieval_aware:
                    if p.cad_id is None or p.cad_id != g.cad_id:
                        continue
                    if pool is not None and p.cad_id not in pool:
                        continue
                matched[i] = True
                counts[g.category][0] += 1
                break
    return table_from_counts({c: (m, n) for c, (m, n) in counts.items()})


def _record(obj, confidence: bool) -> dict:
    d = {"scene": obj.scene, "category": obj.category, "pose": obj.pose.to_dict(), "cad_id": obj.cad_id}
    if obj.id:
        d["id"] = obj.id
    if confidence:
        d["confidence"] = obj.confidence
    else:
        d["symmetry"] = obj.symmetry
    return d


def prediction_from_dict(d: dict) -> Prediction:
    return Prediction(
        str(d["scene"]), d["category"], Pose9DoF.from_dict(d["pose"]),
        float(d.get("confidence", 1.0)), d.get("cad_id"), str(d.get("id", "")),
    )


def gt_from_dict(d: dict) -> GtObject:
    return GtObject(
        str(d["scene"]), d["category"], Pose9DoF.from_dict(d["pose"]),
        d.get("cad_id"), d.get("symmetry", "none"), str(d.get("id", "")),
    )


def read_jsonl(path, parse):
    out = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            out.append(parse(json.loads(line)))
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise InputError(f"{path}:{n}: malformed record ({exc})") from exc
    return out


def write_jsonl(path, objs, confidence: bool) -> None:
    lines = [json.dumps(_record(o, confidence)) for o in objs]
    Path(path).write_text("".join(line + "\n" for line in lines))


def table_cells(table: ScoreTable, categories) -> list[str]:
    """CSV cells in percent: per-class columns, then class and instance averages."""
    cells = [f"{100 * table.per_class[c]:.1f}" if c in table.per_class else "" for c in categories]
    return cells + [f"{100 * table.class_avg:.1f}", f"{100 * table.instance_avg:.1f}"]
