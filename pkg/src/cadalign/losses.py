"""Loss functions: robust depth losses, alignment loss, retrieval and completion losses."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import InputError

TRIPLET_MARGIN = 0.5
BCE_EPS = 1e-7


@dataclass(frozen=True)
class LossWeights:
    w_rot: float = 2.0
    w_noc: float = 3.0
    w_trans: float = 1.0
    w_scale: float = 1.0
    w_trans_initial: float = 1.0

    def __post_init__(self):
        if any(v < 0 for v in asdict(self).values()):
            raise InputError("loss weights must be non-negative")


def _residuals(x) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0:
        raise InputError("empty residual array")
    if not np.all(np.isfinite(x)):
        raise InputError("non-finite residuals")
    return x


def berhu_elementwise(x, c: float) -> np.ndarray:
    """Reverse Huber with a fixed threshold ``c``: l1 inside, scaled quadratic outside."""
    a = np.abs(np.asarray(x, dtype=float))
    if c <= 0:
        return a
    return np.where(a <= c, a, (a * a + c * c) / (2.0 * c))


def berhu(residuals, c_fraction: float = 0.2, c: float | None = None) -> float:
    """Mean berHu loss; the threshold defaults to ``c_fraction * max|residual|``."""
    x = _residuals(residuals)
    if c is None:
        c = c_fraction * float(np.abs(x).max())
    return float(berhu_elementwise(x, c).mean())


def huber(residuals, delta: float = 1.0) -> float:
    if not delta > 0:
        raise InputError("delta must be positive")
    a = np.abs(_residuals(residuals))
    return float(np.where(a <= delta, 0.5 * a * a, delta * (a - 0.5 * delta)).mean())


def alignment_loss(
    R,
    t,
    s,
    q,
    t_init,
    gt_R,
    gt_t,
    gt_s,
    gt_q,
    weights: LossWeights | None = None,
) -> tuple[float, dict[str, float]]:
    """Weighted sum of the rotation, translation, scale, NOC and initial-translation terms.

    Returns ``(total, terms)`` where ``terms`` holds the unweighted values.
    """
    w = weights or LossWeights()
    q = np.asarray(q, dtype=float)
    gt_q = np.asarray(gt_q, dtype=float)
    if q.shape != gt_q.shape:
        raise InputError("predicted and ground-truth NOCs differ in shape")
    terms = {
        "rot": float(np.abs(np.asarray(R) - np.asarray(gt_R)).sum()),
        "trans": float(np.linalg.norm(np.asarray(t) - np.asarray(gt_t))),
        "scale": float(np.abs(np.asarray(s) - np.asarray(gt_s)).sum()),
        # per-point l1 norm, averaged over points
        "noc": float(np.abs(q - gt_q).sum(axis=-1).mean()) if q.size else 0.0,
        "trans_initial": float(np.linalg.norm(np.asarray(t_init) - np.asarray(gt_t))),
    }
    total = (
        w.w_rot * terms["rot"]
        + w.w_trans * terms["trans"]
        + w.w_scale * terms["scale"]
        + w.w_noc * terms["noc"]
        + w.w_trans_initial * terms["trans_initial"]
    )
    return float(total), terms


def triplet(anchor, positive, negative, margin: float = TRIPLET_MARGIN) -> float:
    a, p, n = (np.asarray(v, dtype=float).ravel() for v in (anchor, positive, negative))
    if not (a.shape == p.shape == n.shape):
        raise InputError("embeddings must share a dimension")
    return float(max(np.sum((a - p) ** 2) - np.sum((a - n) ** 2) + margin, 0.0))


def bce_grid(pred, target) -> float:
    """Mean binary cross-entropy between predicted probabilities and a binary grid."""
    from .voxel import VoxelGrid

    yp = pred.values if isinstance(pred, VoxelGrid) else np.asarray(pred, dtype=float)
    y = target.values if isinstance(target, VoxelGrid) else np.asarray(target, dtype=float)
    if yp.shape != y.shape:
        raise InputError(f"grid resolution mismatch: {yp.shape} vs {y.shape}")
    yp = np.clip(yp, BCE_EPS, 1.0 - BCE_EPS)
    return float(-(y * np.log(yp) + (1.0 - y) * np.log1p(-yp)).mean())


def object_depth_loss(d_pred, d_gt) -> float:
    d = np.asarray(d_pred, dtype=float)
    g = np.asarray(d_gt, dtype=float)
    if d.shape != g.shape:
        raise InputError("depth grids differ in shape")
    return float(np.abs(d - g).mean() + abs(d.mean() - g.mean()))
