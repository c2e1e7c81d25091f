"""Synthetic stand-in for the image front-end: CAD catalog, scenes, noisy correspondences, benchmark.

Noise draws for an object depend only on (seed, scene, object), never on the
noise level or weight policy, so benchmark cells are paired comparisons.
"""
from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from . import evalmetrics as em
from .errors import InputError
from .geometry import CameraExtrinsics, CameraIntrinsics, Pose9DoF, apply_pose, random_rotation, rot_z, to_world
from .procrustes import CorrespondenceSet, NOC_SLACK, initial_translation, refine_scale, solve_alignment, solve_irls
from .retrieval import CAD_POINTS, CadDatabase, CadEntry, build_index, query_chamfer
from .shapes import CATEGORIES, gen_mesh
from .voxel import Mesh, fps, occupancy_from_mesh, sample_surface

log = logging.getLogger(__name__)

POLICIES = ("uniform", "mask", "oracle", "irls")
OUTLIER_MASK_PROB = 0.5
OUTLIER_WEIGHT = 1e-6
DENSE_SAMPLES = 4096
MIN_SEPARATION = 1.0
DEFAULT_INTRINSICS = CameraIntrinsics(fx=400.0, fy=400.0, cx=240.0, cy=180.0, width=480, height=360)


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng([int(k) for k in key])


# ---------------------------------------------------------------- CAD catalog


def gen_cad(category: str, seed: int, points: int = CAD_POINTS) -> tuple[Mesh, CadEntry]:
    mesh = gen_mesh(category, seed)
    dense, _ = sample_surface(mesh, DENSE_SAMPLES, _rng(CATEGORIES.index(category), seed, 1))
    pts = dense[fps(dense, points)]
    grid = occupancy_from_mesh(mesh, seed=seed)
    return mesh, CadEntry(f"{category}-{seed:03d}", category, pts, grid)


@lru_cache(maxsize=4)
def synthetic_catalog(n_entries: int = 50) -> tuple[CadDatabase, dict[str, Mesh]]:
    """Round-robin over categories: entry ``k`` is ``(CATEGORIES[k % 9], k // 9)``."""
    meshes, entries = {}, []
    for k in range(n_entries):
        mesh, entry = gen_cad(CATEGORIES[k % len(CATEGORIES)], k // len(CATEGORIES))
        meshes[entry.id] = mesh
        entries.append(entry)
    return build_index(entries), meshes


# ---------------------------------------------------------------- scenes


@dataclass(frozen=True)
class SceneConfig:
    objects: tuple[int, int] = (1, 4)
    scale_range: tuple[float, float] = (0.5, 2.0)
    rotation_mode: str = "full"
    depth_range: tuple[float, float] = (1.5, 5.0)

    def __post_init__(self):
        if self.rotation_mode not in ("full", "yaw"):
            raise InputError(f"rotation mode must be 'full' or 'yaw', got {self.rotation_mode!r}")
        lo, hi = self.depth_range
        if not 1.0 <= lo <= hi <= 5.0:
            raise InputError("depth range must lie within [1, 5] m")


@dataclass(frozen=True)
class SceneObject:
    category: str
    cad_id: str
    pose: Pose9DoF  # camera frame


@dataclass(frozen=True)
class SceneGroundTruth:
    scene_id: str
    intrinsics: CameraIntrinsics
    extrinsics: CameraExtrinsics
    objects: tuple[SceneObject, ...]
    seed: int

    def world_pose(self, k: int) -> Pose9DoF:
        return to_world(self.objects[k].pose, self.extrinsics)

    def gt_objects(self) -> list[em.GtObject]:
        return [
            em.GtObject(self.scene_id, o.category, self.world_pose(k), o.cad_id, id=f"{self.scene_id}/{k}")
            for k, o in enumerate(self.objects)
        ]


def gen_scene(config: SceneConfig, seed: int, catalog: CadDatabase | None = None, scene_id: str | None = None,
              n_objects: int | None = None) -> SceneGroundTruth:
    """Random camera and well-separated objects placed inside the view frustum."""
    catalog = catalog if catalog is not None else synthetic_catalog()[0]
    rng = _rng(seed, 0)
    intr = DEFAULT_INTRINSICS
    extr = CameraExtrinsics(random_rotation(rng), rng.uniform(-5, 5, size=3))
    k = int(rng.integers(config.objects[0], config.objects[1] + 1)) if n_objects is None else n_objects
    categories = sorted(catalog.by_category)
    objs: list[SceneObject] = []
    for _ in range(k):
        for _attempt in range(200):
            z = rng.uniform(*config.depth_range)
            u = rng.uniform(0.1 * intr.width, 0.9 * intr.width)
            v = rng.uniform(0.1 * intr.height, 0.9 * intr.height)
            t = np.array([(u - intr.cx) / intr.fx * z, (v - intr.cy) / intr.fy * z, z])
            if all(np.linalg.norm(t - o.pose.t) >= MIN_SEPARATION for o in objs):
                break
        else:
            break
        cat = categories[int(rng.integers(len(categories)))]
        ids = catalog.by_category[cat]
        cad_id = ids[int(rng.integers(len(ids)))]
        s = rng.uniform(*config.scale_range, size=3)
        if config.rotation_mode == "full":
            R = random_rotation(rng)
        else:
            # upright in the world: R_cam @ R is a yaw about world z
            R = extr.R_cam.T @ rot_z(rng.uniform(0, 2 * np.pi))
        objs.append(SceneObject(cat, cad_id, Pose9DoF(t, s, R)))
    return SceneGroundTruth(scene_id or f"scene{seed}", intr, extr, tuple(objs), seed)


# ---------------------------------------------------------------- correspondences


@dataclass(frozen=True)
class NoiseSpec:
    noc_sigma: float = 0.0
    depth_sigma: float = 0.0
    outlier_fraction: float = 0.0
    points_per_object: int = 256

    def __post_init__(self):
        if self.noc_sigma < 0 or self.depth_sigma < 0:
            raise InputError("noise levels must be non-negative")
        if not 0 <= self.outlier_fraction < 1:
            raise InputError("outlier fraction must lie in [0, 1)")
        if self.points_per_object < 8:
            raise InputError("need at least 8 points per object")


@dataclass(frozen=True)
class _Draws:
    q_gt: np.ndarray
    p_clean: np.ndarray
    noc_noise: np.ndarray  # standard normal, (M, 3)
    depth_noise: np.ndarray  # standard normal, (M,)
    outliers: np.ndarray  # bool mask
    outlier_q: np.ndarray


@dataclass(frozen=True)
class CorrespondenceSample:
    corr: CorrespondenceSet
    inliers: np.ndarray
    q_gt: np.ndarray
    q_raw: np.ndarray  # noisy NOCs before clamping into the padded cube


def _draw(mesh: Mesh, pose: Pose9DoF, m: int, rho: float, seed) -> _Draws:
    rng = np.random.default_rng(seed)
    dense, _ = sample_surface(mesh, DENSE_SAMPLES, rng)
    cam = apply_pose(pose, dense).points
    # crude visibility: the half of the surface nearer to the camera
    visible = dense[cam[:, 2] <= np.median(cam[:, 2])]
    q_gt = visible[fps(visible, min(m, len(visible)))]
    m = len(q_gt)
    outliers = np.zeros(m, dtype=bool)
    outliers[rng.permutation(m)[: int(np.floor(rho * m))]] = True
    return _Draws(
        q_gt=q_gt,
        p_clean=apply_pose(pose, q_gt).points,
        noc_noise=rng.normal(size=(m, 3)),
        depth_noise=rng.normal(size=m),
        outliers=outliers,
        outlier_q=rng.uniform(-0.5, 0.5, size=(m, 3)),
    )


def _realize(d: _Draws, noise: NoiseSpec) -> CorrespondenceSample:
    p = d.p_clean.copy()
    p[:, 2] += noise.depth_sigma * d.depth_noise
    q_raw = d.q_gt + noise.noc_sigma * d.noc_noise
    q_raw[d.outliers] = d.outlier_q[d.outliers]
    q = np.clip(q_raw, -0.5 - NOC_SLACK, 0.5 + NOC_SLACK)
    mask = np.where(d.outliers, OUTLIER_MASK_PROB, 1.0)
    return CorrespondenceSample(CorrespondenceSet(q, p, None, mask), ~d.outliers, d.q_gt, q_raw)


def sample_correspondences(obj: SceneObject, noise: NoiseSpec, seed, mesh: Mesh | None = None) -> CorrespondenceSample:
    """Visible-surface NOC samples with Gaussian NOC/depth noise and uniform NOC outliers."""
    if mesh is None:
        mesh = synthetic_catalog_mesh(obj.cad_id)
    d = _draw(mesh, obj.pose, noise.points_per_object, noise.outlier_fraction, seed)
    return _realize(d, noise)


def synthetic_catalog_mesh(cad_id: str) -> Mesh:
    cat, seed = cad_id.rsplit("-", 1)
    return gen_mesh(cat, int(seed))


def policy_weights(sample: CorrespondenceSample, policy: str) -> np.ndarray:
    if policy == "uniform":
        return np.ones(len(sample.corr))
    if policy == "mask":
        return sample.corr.m.copy()
    if policy == "oracle":
        return np.where(sample.inliers, 1.0, OUTLIER_WEIGHT)
    raise InputError(f"policy {policy!r} has no static weights")


def solve_sample(sample: CorrespondenceSample, s, policy: str, refine: bool = False):
    """Solve one object under a weight policy; t_init is the extents center of p."""
    if policy not in POLICIES:
        raise InputError(f"unknown weight policy {policy!r}")
    corr = sample.corr
    t_init = initial_translation(corr.p)
    if policy == "irls":
        report = solve_irls(corr, s, t_init)
    else:
        report = solve_alignment(corr.with_weights(policy_weights(sample, policy)), s, t_init)
    if refine:
        report = refine_scale(corr, report.pose.s, t_init, weights=report.weights)
    return report


# ---------------------------------------------------------------- benchmark


@dataclass(frozen=True)
class BenchConfig:
    seed: int = 0
    scenes: int = 200
    sigmas: tuple[float, ...] = (0.0, 0.1, 0.2, 0.3)
    policies: tuple[str, ...] = ("uniform", "irls")
    outlier_fraction: float = 0.1
    depth_sigma: float = 0.0
    points_per_object: int = 256
    objects: tuple[int, int] = (1, 4)
    scale_range: tuple[float, float] = (0.5, 2.0)
    rotation_mode: str = "full"
    tau: float = em.DEFAULT_TAU
    retrieval: bool = True
    pool: str = "category"
    db_entries: int = 50
    refine_scale: bool = False
    threads: int = 1

    def __post_init__(self):
        for p in self.policies:
            if p not in POLICIES:
                raise InputError(f"unknown weight policy {p!r}")
        if self.pool not in ("category", "scene"):
            raise InputError("pool must be 'category' or 'scene'")
        if self.scenes < 1:
            raise InputError("need at least one scene")
        if any(s < 0 for s in self.sigmas):
            raise InputError("sigmas must be non-negative")
        NoiseSpec(0.0, self.depth_sigma, self.outlier_fraction, self.points_per_object)

    @classmethod
    def from_dict(cls, d: dict) -> "BenchConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise InputError(f"unknown config keys {sorted(unknown)}")
        d = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**d)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    def scene_config(self) -> SceneConfig:
        return SceneConfig(tuple(self.objects), tuple(self.scale_range), self.rotation_mode)


def scene_seed(base: int, index: int) -> int:
    return int(np.random.SeedSequence([base, index]).generate_state(1)[0])


def _retrieval_query(sample: CorrespondenceSample, weights: np.ndarray) -> np.ndarray:
    keep = weights >= 0.5 * weights.max()
    return np.clip(sample.corr.q[keep], -0.5, 0.5)


def _eval_scene(args) -> tuple[list[em.GtObject], dict]:
    cfg, index = args
    db, meshes = synthetic_catalog(cfg.db_entries)
    seed = scene_seed(cfg.seed, index)
    scene = gen_scene(cfg.scene_config(), seed, db, scene_id=f"scene{index:04d}")
    pool_ids = {o.cad_id for o in scene.objects}
    draws = [
        _draw(meshes[o.cad_id], o.pose, cfg.points_per_object, cfg.outlier_fraction, [seed, k, 7])
        for k, o in enumerate(scene.objects)
    ]
    cells: dict[tuple[float, str], list[em.Prediction]] = {}
    for sigma in cfg.sigmas:
        noise = NoiseSpec(sigma, cfg.depth_sigma, cfg.outlier_fraction, cfg.points_per_object)
        samples = [_realize(d, noise) for d in draws]
        for policy in cfg.policies:
            preds = []
            for k, (obj, sample) in enumerate(zip(scene.objects, samples)):
                report = solve_sample(sample, obj.pose.s, policy, cfg.refine_scale)
                w = report.weights
                cad_id = None
                if cfg.retrieval:
                    if cfg.pool == "scene":
                        cands = sorted(i for i in pool_ids if db.entries[i].category == obj.category)
                        sub = build_index([db.entries[i] for i in cands])
                        ranked = query_chamfer(sub, _retrieval_query(sample, w), obj.category)
                    else:
                        ranked = query_chamfer(db, _retrieval_query(sample, w), obj.category)
                    cad_id = ranked[0]
                preds.append(em.Prediction(
                    scene.scene_id, obj.category, to_world(report.pose, scene.extrinsics),
                    float(np.clip(np.mean(w / w.max()), 0.0, 1.0)), cad_id, f"{scene.scene_id}/{k}",
                ))
            cells[(sigma, policy)] = preds
    return scene.gt_objects(), cells


@dataclass
class BenchReport:
    config: BenchConfig
    scene_seeds: list[int]
    rows: list[dict] = field(default_factory=list)

    def cell(self, sigma: float, policy: str) -> dict:
        for r in self.rows:
            if r["sigma"] == sigma and r["policy"] == policy:
                return r
        raise KeyError((sigma, policy))

    def to_json(self) -> str:
        doc = {"config": self.config.to_dict(), "scene_seeds": self.scene_seeds, "rows": self.rows}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sigma", "policy", "rho", "metric", *CATEGORIES, "class", "instance"])
        for r in self.rows:
            for metric in ("alignment", "retrieval_aware"):
                if metric not in r:
                    continue
                t = r[metric]
                cells = [f"{t['class_acc'][c]:.6f}" if c in t["class_acc"] else "" for c in CATEGORIES]
                w.writerow([r["sigma"], r["policy"], r["rho"], metric, *cells,
                            f"{t['class_avg']:.6f}", f"{t['instance_avg']:.6f}"])
        return buf.getvalue()


def _table_json(t: em.ScoreTable) -> dict:
    return {
        "class_acc": dict(sorted(t.per_class.items())),
        "counts": {k: list(v) for k, v in sorted(t.counts.items())},
        "class_avg": t.class_avg,
        "instance_avg": t.instance_avg,
    }


def run_benchmark(cfg: BenchConfig) -> BenchReport:
    """Sweep noise levels and weight policies over seeded synthetic scenes."""
    jobs = [(cfg, i) for i in range(cfg.scenes)]
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as ex:
            results = list(ex.map(_eval_scene, jobs, chunksize=max(1, cfg.scenes // (4 * cfg.threads))))
    else:
        results = [_eval_scene(j) for j in jobs]

    gts = [g for scene_gts, _ in results for g in scene_gts]
    report = BenchReport(cfg, [scene_seed(cfg.seed, i) for i in range(cfg.scenes)])
    for sigma in cfg.sigmas:
        for policy in cfg.policies:
            preds = [p for _, cells in results for p in cells[(sigma, policy)]]
            clustered = em.cluster_world(preds, cfg.tau)
            row = {
                "sigma": sigma,
                "policy": policy,
                "rho": cfg.outlier_fraction,
                "alignment": _table_json(em.match_and_score(clustered, gts)),
            }
            if cfg.retrieval:
                row["retrieval_aware"] = _table_json(em.match_and_score(clustered, gts, retrieval_aware=True))
            report.rows.append(row)
    return report
