"""CAD database and nearest-neighbor retrieval by embedding distance or one-sided Chamfer."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyPoolError, InputError
from .voxel import VoxelGrid, chamfer_one_sided

EMBED_DIM = 256
CAD_POINTS = 1024


@dataclass(frozen=True)
class CadEntry:
    id: str
    category: str
    points: np.ndarray
    grid: VoxelGrid | None = None
    embedding: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) == 0:
            raise InputError(f"entry {self.id}: points must be non-empty (N, 3)")
        if np.any(np.abs(pts) > 0.5 + 1e-9):
            raise InputError(f"entry {self.id}: points outside the NOC cube")
        object.__setattr__(self, "points", pts)
        if self.embedding is not None:
            emb = np.asarray(self.embedding, dtype=float).ravel()
            if not np.all(np.isfinite(emb)):
                raise InputError(f"entry {self.id}: non-finite embedding")
            object.__setattr__(self, "embedding", emb)


@dataclass(frozen=True)
class CadDatabase:
    entries: MappingProxyType
    by_category: MappingProxyType
    pools: MappingProxyType
    _trees: dict = field(default_factory=dict, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, cad_id: str) -> bool:
        return cad_id in self.entries

    def tree(self, cad_id: str) -> cKDTree:
        t = self._trees.get(cad_id)
        if t is None:
            t = self._trees[cad_id] = cKDTree(self.entries[cad_id].points)
        return t

    def candidates(self, category: str, pool: str | None = None) -> list[str]:
        ids = set(self.by_category.get(category, ()))
        if pool is not None:
            if pool not in self.pools:
                raise InputError(f"unknown scene pool {pool!r}")
            ids &= self.pools[pool]
        if not ids:
            raise EmptyPoolError(f"no candidates for category {category!r} in pool {pool!r}")
        return sorted(ids)


def build_index(entries, pools: dict[str, set[str]] | None = None) -> CadDatabase:
    by_id: dict[str, CadEntry] = {}
    for e in entries:
        if e.id in by_id:
            raise InputError(f"duplicate CAD id {e.id!r}")
        by_id[e.id] = e
    by_cat: dict[str, tuple[str, ...]] = {}
    for cid in sorted(by_id):
        by_cat.setdefault(by_id[cid].category, ())
        by_cat[by_id[cid].category] += (cid,)
    frozen_pools = {}
    for scene, ids in (pools or {}).items():
        missing = set(ids) - by_id.keys()
        if missing:
            raise InputError(f"pool {scene!r} references unknown ids {sorted(missing)}")
        frozen_pools[scene] = frozenset(ids)
    return CadDatabase(MappingProxyType(by_id), MappingProxyType(by_cat), MappingProxyType(frozen_pools))


def _rank(scored: list[tuple[float, str]]) -> list[str]:
    return [cid for _, cid in sorted(scored)]


def query_embedding(db: CadDatabase, query, category: str, pool: str | None = None, with_scores: bool = False):
    """Candidates ranked by squared Euclidean embedding distance (ties: id order)."""
    z = np.asarray(query, dtype=float).ravel()
    scored = []
    for cid in db.candidates(category, pool):
        emb = db.entries[cid].embedding
        if emb is None:
            raise InputError(f"entry {cid!r} has no embedding")
        if emb.shape != z.shape:
            raise InputError(f"embedding dimension mismatch for {cid!r}")
        scored.append((float(np.sum((emb - z) ** 2)), cid))
    return sorted(scored) if with_scores else _rank(scored)


def query_chamfer(db: CadDatabase, noc_points, category: str, pool: str | None = None, with_scores: bool = False):
    """Candidates ranked by one-sided Chamfer distance from the query NOCs to each entry."""
    q = np.asarray(getattr(noc_points, "points", noc_points), dtype=float)
    if q.ndim != 2 or q.shape[1] != 3 or len(q) == 0:
        raise InputError("query needs a non-empty (N, 3) NOC array")
    scored = [
        (chamfer_one_sided(q, db.entries[cid].points, tree=db.tree(cid)), cid)
        for cid in db.candidates(category, pool)
    ]
    return sorted(scored) if with_scores else _rank(scored)


# Manifest: {"entries": [{"id", "category", "points": "x.bin", "grid": "g" | null,
#  "embedding": "e.bin" | null}], "pools": {scene: [ids]}}; point and embedding
# blobs are float32 little-endian, points row-major (N, 3).


def save_manifest(db: CadDatabase, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    records = []
    for cid in sorted(db.entries):
        e = db.entries[cid]
        rec = {"id": cid, "category": e.category, "points": f"{cid}.points.bin", "grid": None, "embedding": None}
        (directory / rec["points"]).write_bytes(e.points.astype("<f4").tobytes())
        if e.grid is not None:
            rec["grid"] = f"{cid}.grid"
            e.grid.save(directory / rec["grid"])
        if e.embedding is not None:
            rec["embedding"] = f"{cid}.emb.bin"
            (directory / rec["embedding"]).write_bytes(e.embedding.astype("<f4").tobytes())
        records.append(rec)
    manifest = {"entries": records, "pools": {k: sorted(v) for k, v in sorted(db.pools.items())}}
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def load_manifest(path) -> CadDatabase:
    path = Path(path)
    root = path.parent
    data = json.loads(path.read_text())
    entries = []
    for rec in data["entries"]:
        pts = np.frombuffer((root / rec["points"]).read_bytes(), dtype="<f4").astype(float).reshape(-1, 3)
        # float32 round-off can push boundary points just past the cube
        pts = np.clip(pts, -0.5, 0.5)
        grid = VoxelGrid.load(root / rec["grid"]) if rec.get("grid") else None
        emb = None
        if rec.get("embedding"):
            emb = np.frombuffer((root / rec["embedding"]).read_bytes(), dtype="<f4").astype(float)
        entries.append(CadEntry(rec["id"], rec["category"], pts, grid, emb))
    pools = {k: set(v) for k, v in data.get("pools", {}).items()}
    return build_index(entries, pools)
