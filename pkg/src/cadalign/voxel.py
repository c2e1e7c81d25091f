"""Canonical-cube voxel grids, surface sampling, farthest point sampling and one-sided Chamfer.

Grids cover ``[-0.5, 0.5]^3`` with cell centers at ``(i + 0.5) / res - 0.5`` and
are stored z-major: ``values[z, y, x]``.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import InputError
from .geometry import PointCloud

log = logging.getLogger(__name__)

DEFAULT_RESOLUTION = 32


@dataclass(frozen=True)
class VoxelGrid:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3 or len(set(v.shape)) != 1:
            raise InputError(f"grid must be cubic, got shape {v.shape}")
        if v.shape[0] < 2:
            raise InputError("grid resolution must be at least 2")
        if np.any(v < 0) or np.any(v > 1) or not np.all(np.isfinite(v)):
            raise InputError("grid values must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    @property
    def resolution(self) -> int:
        return self.values.shape[0]

    def save(self, path) -> tuple[Path, Path]:
        """Write ``<path>.bin`` (f32 little-endian, z-major) and ``<path>.json`` sidecar."""
        base = Path(path)
        if base.suffix in (".bin", ".json"):
            base = base.with_suffix("")
        bin_path = base.with_suffix(".bin")
        meta_path = base.with_suffix(".json")
        bin_path.write_bytes(self.values.astype("<f4").tobytes(order="C"))
        meta = {"resolution": self.resolution, "order": "zyx", "dtype": "f32le", "data": bin_path.name}
        meta_path.write_text(json.dumps(meta, indent=2) + "\n")
        return bin_path, meta_path

    @classmethod
    def load(cls, path) -> "VoxelGrid":
        base = Path(path)
        if base.suffix in (".bin", ".json"):
            base = base.with_suffix("")
        meta = json.loads(base.with_suffix(".json").read_text())
        if meta.get("order") != "zyx" or meta.get("dtype") != "f32le":
            raise InputError(f"unsupported grid layout {meta}")
        res = int(meta["resolution"])
        data = np.frombuffer(base.with_suffix(".bin").read_bytes(), dtype="<f4")
        if data.size != res**3:
            raise InputError("grid binary size does not match resolution")
        return cls(data.astype(float).reshape(res, res, res))


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        f = np.asarray(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3 or f.ndim != 2 or f.shape[1] != 3:
            raise InputError("mesh needs (V, 3) vertices and (T, 3) triangles")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise InputError("triangle index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", f)

    def areas(self) -> np.ndarray:
        a, b, c = (self.vertices[self.triangles[:, i]] for i in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def splat_mass(pts, resolution: int = DEFAULT_RESOLUTION) -> np.ndarray:
    """Unnormalized trilinear splat; every point deposits total mass 1.

    Points in the outer half-cell band splat onto the boundary cells so no
    mass leaves the grid.
    """
    pts = pts.points if isinstance(pts, PointCloud) else np.asarray(pts, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) == 0:
        raise InputError("voxelization needs a non-empty (N, 3) point array")
    if np.any(np.abs(pts) > 0.5):
        log.warning("clamping %d points into the NOC cube", int(np.any(np.abs(pts) > 0.5, axis=1).sum()))
        pts = np.clip(pts, -0.5, 0.5)
    u = np.clip((pts + 0.5) * resolution - 0.5, 0.0, resolution - 1.0)
    i0 = np.minimum(np.floor(u).astype(np.int64), resolution - 2)
    f = u - i0
    grid = np.zeros((resolution,) * 3)
    for dz in (0, 1):
        wz = f[:, 2] if dz else 1.0 - f[:, 2]
        for dy in (0, 1):
            wy = f[:, 1] if dy else 1.0 - f[:, 1]
            for dx in (0, 1):
                wx = f[:, 0] if dx else 1.0 - f[:, 0]
                np.add.at(grid, (i0[:, 2] + dz, i0[:, 1] + dy, i0[:, 0] + dx), wx * wy * wz)
    return grid


def voxelize_points(pts, resolution: int = DEFAULT_RESOLUTION) -> VoxelGrid:
    """Trilinear density grid normalized so its largest cell is 1."""
    grid = splat_mass(pts, resolution)
    peak = grid.max()
    if peak > 0:
        grid = grid / peak
    return VoxelGrid(np.clip(grid, 0.0, 1.0))


def sample_surface(mesh: Mesh, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Area-weighted uniform surface samples; returns (points, triangle index per point)."""
    areas = mesh.areas()
    total = areas.sum()
    if not (np.isfinite(total) and total > 0):
        raise InputError("mesh has zero surface area")
    tri = rng.choice(len(areas), size=n, p=areas / total)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    a, b, c = (mesh.vertices[mesh.triangles[tri, i]] for i in range(3))
    pts = (1 - r1)[:, None] * a + (r1 * (1 - r2))[:, None] * b + (r1 * r2)[:, None] * c
    return pts, tri


def occupancy_from_mesh(
    mesh: Mesh, resolution: int = DEFAULT_RESOLUTION, samples: int = 20000, seed: int = 0
) -> VoxelGrid:
    """Binary surface occupancy: a cell is set when any surface sample lands in it."""
    pts, _ = sample_surface(mesh, samples, np.random.default_rng(seed))
    idx = np.clip(np.floor((pts + 0.5) * resolution).astype(np.int64), 0, resolution - 1)
    grid = np.zeros((resolution,) * 3)
    grid[idx[:, 2], idx[:, 1], idx[:, 0]] = 1.0
    return VoxelGrid(grid)


def fps(pts, k: int) -> np.ndarray:
    """Greedy farthest point sampling seeded at index 0."""
    pts = pts.points if isinstance(pts, PointCloud) else np.asarray(pts, dtype=float)
    n = len(pts)
    if k > n:
        raise InputError(f"cannot sample {k} of {n} points")
    if k <= 0:
        return np.zeros(0, dtype=np.int64)
    x, y, z = np.ascontiguousarray(pts.T)
    out = np.empty(k, dtype=np.int64)
    out[0] = 0
    dist = (x - x[0]) ** 2 + (y - y[0]) ** 2 + (z - z[0]) ** 2
    for i in range(1, k):
        j = int(dist.argmax())
        out[i] = j
        np.minimum(dist, (x - x[j]) ** 2 + (y - y[j]) ** 2 + (z - z[j]) ** 2, out=dist)
    return out


def chamfer_one_sided(A, B, tree: cKDTree | None = None) -> float:
    """Mean over ``A`` of the squared distance to the nearest point of ``B``.

    ``tree`` may be a prebuilt KD-tree over ``B``.
    """
    A = A.points if isinstance(A, PointCloud) else np.asarray(A, dtype=float)
    B = B.points if isinstance(B, PointCloud) else np.asarray(B, dtype=float)
    if len(A) == 0 or len(B) == 0:
        raise InputError("Chamfer distance needs non-empty point sets")
    tree = tree if tree is not None else cKDTree(B)
    _, idx = tree.query(A)
    # squared distances recomputed from coordinates so coincident points give exactly 0
    return float(np.sum((A - B[idx]) ** 2, axis=1).mean())
