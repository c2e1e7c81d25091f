"""Procedural CAD stand-ins: box/cylinder composites per benchmark category."""
from __future__ import annotations

import numpy as np

from .errors import InputError
from .voxel import Mesh

CATEGORIES = ("bathtub", "bed", "bin", "bookshelf", "cabinet", "chair", "display", "sofa", "table")

_BOX_FACES = np.array(
    [
        [0, 2, 1], [0, 3, 2],  # -z
        [4, 5, 6], [4, 6, 7],  # +z
        [0, 1, 5], [0, 5, 4],  # -y
        [3, 7, 6], [3, 6, 2],  # +y
        [0, 4, 7], [0, 7, 3],  # -x
        [1, 2, 6], [1, 6, 5],  # +x
    ]
)


def box(lo, hi) -> tuple[np.ndarray, np.ndarray]:
    (x0, y0, z0), (x1, y1, z1) = lo, hi
    v = np.array(
        [[x0, y0, z0], [x1, y0, z0], [x1, y1, z0], [x0, y1, z0],
         [x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1]],
        dtype=float,
    )
    return v, _BOX_FACES.copy()


def cylinder(center, radius: float, z0: float, z1: float, segments: int = 24):
    ang = np.linspace(0, 2 * np.pi, segments, endpoint=False)
    ring = np.stack([center[0] + radius * np.cos(ang), center[1] + radius * np.sin(ang)], axis=1)
    bottom = np.column_stack([ring, np.full(segments, z0)])
    top = np.column_stack([ring, np.full(segments, z1)])
    v = np.vstack([bottom, top, [[center[0], center[1], z0], [center[0], center[1], z1]]])
    cb, ct = 2 * segments, 2 * segments + 1
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        faces += [[i, j, segments + j], [i, segments + j, segments + i], [cb, j, i], [ct, segments + i, segments + j]]
    return v, np.array(faces)


def merge(parts) -> Mesh:
    verts, faces, off = [], [], 0
    for v, f in parts:
        verts.append(v)
        faces.append(f + off)
        off += len(v)
    return Mesh(np.vstack(verts), np.vstack(faces))


def normalize(mesh: Mesh) -> Mesh:
    """Center the bounding box and scale the longest side to 1."""
    lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    v = (mesh.vertices - 0.5 * (lo + hi)) / (hi - lo).max()
    return Mesh(np.clip(v, -0.5, 0.5), mesh.triangles)


# Each builder works in a z-up frame with the footprint on the xy plane.


def _legs(rng, w, d, h, t):
    return [box((sx * (w - t), sy * (d - t), 0), (sx * (w - t) + t, sy * (d - t) + t, h))
            for sx in (0, 1) for sy in (0, 1)]


def _bathtub(rng):
    w, d, h = rng.uniform(1.4, 1.9), rng.uniform(0.6, 0.9), rng.uniform(0.4, 0.6)
    t = rng.uniform(0.05, 0.1)
    return [box((0, 0, 0), (w, d, t)), box((0, 0, 0), (t, d, h)), box((w - t, 0, 0), (w, d, h)),
            box((0, 0, 0), (w, t, h)), box((0, d - t, 0), (w, d, h))]


def _bed(rng):
    w, d = rng.uniform(0.9, 1.8), rng.uniform(1.8, 2.2)
    hb, hh = rng.uniform(0.3, 0.6), rng.uniform(0.8, 1.3)
    return [box((0, 0, 0), (w, d, hb)), box((0, d - 0.08, 0), (w, d, hh))]


def _bin(rng):
    r, h = rng.uniform(0.12, 0.25), rng.uniform(0.3, 0.7)
    parts = [cylinder((0, 0), r, 0, h)]
    if rng.random() < 0.5:
        parts.append(cylinder((0, 0), r * 1.1, h, h + 0.03))
    return parts


def _bookshelf(rng):
    w, d, h = rng.uniform(0.6, 1.2), rng.uniform(0.25, 0.4), rng.uniform(1.0, 2.0)
    t = 0.03
    shelves = int(rng.integers(2, 6))
    parts = [box((0, 0, 0), (t, d, h)), box((w - t, 0, 0), (w, d, h)), box((0, d - t, 0), (w, d, h))]
    for z in np.linspace(0, h - t, shelves + 1):
        parts.append(box((0, 0, z), (w, d, z + t)))
    return parts


def _cabinet(rng):
    w, d, h = rng.uniform(0.4, 1.5), rng.uniform(0.4, 0.7), rng.uniform(0.5, 1.2)
    parts = [box((0, 0, 0.08), (w, d, h))]
    if rng.random() < 0.5:
        parts.append(box((0.03, 0.03, 0), (w - 0.03, d - 0.03, 0.08)))
    else:
        parts += _legs(rng, w, d, 0.08, 0.05)
    return parts


def _chair(rng):
    w, d = rng.uniform(0.4, 0.6), rng.uniform(0.4, 0.6)
    hs, hb = rng.uniform(0.4, 0.5), rng.uniform(0.35, 0.6)
    t = rng.uniform(0.03, 0.06)
    return _legs(rng, w, d, hs, t) + [box((0, 0, hs), (w, d, hs + 0.05)), box((0, d - 0.05, hs), (w, d, hs + hb))]


def _display(rng):
    w, h = rng.uniform(0.4, 0.9), rng.uniform(0.3, 0.6)
    stand = rng.uniform(0.1, 0.25)
    return [box((0, 0, stand), (w, 0.04, stand + h)),
            box((w / 2 - 0.03, 0.0, 0.02), (w / 2 + 0.03, 0.06, stand)),
            box((w / 2 - 0.12, -0.08, 0), (w / 2 + 0.12, 0.12, 0.02))]


def _sofa(rng):
    w, d = rng.uniform(1.4, 2.4), rng.uniform(0.8, 1.0)
    hs, hb, ha = rng.uniform(0.35, 0.45), rng.uniform(0.7, 0.9), rng.uniform(0.5, 0.65)
    a = rng.uniform(0.1, 0.2)
    return [box((0, 0, 0), (w, d, hs)), box((0, d - 0.2, 0), (w, d, hb)),
            box((0, 0, 0), (a, d, ha)), box((w - a, 0, 0), (w, d, ha))]


def _table(rng):
    w, d, h = rng.uniform(0.6, 1.8), rng.uniform(0.5, 1.0), rng.uniform(0.45, 0.8)
    t = rng.uniform(0.04, 0.08)
    return _legs(rng, w, d, h, t) + [box((0, 0, h), (w, d, h + 0.04))]


_BUILDERS = {
    "bathtub": _bathtub, "bed": _bed, "bin": _bin, "bookshelf": _bookshelf, "cabinet": _cabinet,
    "chair": _chair, "display": _display, "sofa": _sofa, "table": _table,
}


def gen_mesh(category: str, seed: int) -> Mesh:
    """Deterministic normalized mesh for ``(category, seed)``."""
    try:
        builder = _BUILDERS[category]
    except KeyError:
        raise InputError(f"unknown category {category!r}") from None
    rng = np.random.default_rng([CATEGORIES.index(category), seed])
    return normalize(merge(builder(rng)))
