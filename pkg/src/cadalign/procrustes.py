"""Weighted orthogonal Procrustes solve for rotation and refined translation.

Given scaled canonical points ``qs = q * s`` and centered camera points
``pc = p - t_init`` with positive weights ``c``, the rotation minimizes
``sum_k c_k ||R qs_k - pc_k||^2``.  It is read off the SVD of the weighted
cross-covariance ``pc^T diag(c) qs = U S V^T`` as ``U diag(1, 1, d) V^T`` with
``d = det(V U^T)``, which keeps the result proper even when the unconstrained
optimum is a reflection.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .geometry import Pose9DoF, PointCloud

log = logging.getLogger(__name__)

NOC_SLACK = 0.05
DEGENERATE_RATIO = 1e-9
WEIGHT_FLOOR = 1e-6
TUKEY_C = 4.685
MAD_TO_SIGMA = 1.4826


@dataclass(frozen=True)
class CorrespondenceSet:
    """Paired NOC points ``q`` and camera points ``p`` with weights and mask probabilities."""

    q: np.ndarray
    p: np.ndarray
    c: np.ndarray | None = None
    m: np.ndarray | None = None

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        p = np.asarray(self.p, dtype=float)
        if q.ndim != 2 or q.shape[1] != 3 or p.shape != q.shape:
            raise InputError("q and p must both be (N, 3)")
        n = len(q)
        if n < 3:
            raise InputError("at least 3 correspondences are required")
        c = np.ones(n) if self.c is None else np.asarray(self.c, dtype=float).reshape(-1)
        m = np.ones(n) if self.m is None else np.asarray(self.m, dtype=float).reshape(-1)
        if len(c) != n or len(m) != n:
            raise InputError("weights and mask probabilities must have length N")
        for name, arr in (("q", q), ("p", p), ("c", c), ("m", m)):
            if not np.all(np.isfinite(arr)):
                raise InputError(f"{name} contains non-finite values")
        if np.any(c <= 0):
            raise InputError("weights must be positive")
        if np.any((m < 0) | (m > 1)):
            raise InputError("mask probabilities must lie in [0, 1]")
        if np.any(np.abs(q) > 0.5 + NOC_SLACK):
            raise InputError("NOC points fall outside the padded unit cube")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "m", m)

    def __len__(self) -> int:
        return len(self.q)

    def with_weights(self, c) -> "CorrespondenceSet":
        return CorrespondenceSet(self.q, self.p, c, self.m)

    def subset(self, idx) -> "CorrespondenceSet":
        return CorrespondenceSet(self.q[idx], self.p[idx], self.c[idx], self.m[idx])

    def to_dict(self) -> dict:
        return {
            "q": self.q.tolist(),
            "p": self.p.tolist(),
            "c": self.c.tolist(),
            "m": self.m.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CorrespondenceSet":
        return cls(d["q"], d["p"], d.get("c"), d.get("m"))


@dataclass(frozen=True)
class SolveReport:
    pose: Pose9DoF
    singular_values: np.ndarray
    degenerate: bool
    weights: np.ndarray = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "pose": self.pose.to_dict(),
            "singular_values": self.singular_values.tolist(),
            "degenerate": bool(self.degenerate),
        }


def initial_translation(p) -> np.ndarray:
    """Center of the axis-aligned bounding box of the camera points."""
    pts = p.points if isinstance(p, PointCloud) else np.asarray(p, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) == 0:
        raise InputError("initial_translation needs a non-empty (N, 3) cloud")
    return 0.5 * (pts.max(axis=0) + pts.min(axis=0))


def _check_triplet(qs, pc, c):
    qs = np.asarray(qs, dtype=float)
    pc = np.asarray(pc, dtype=float)
    c = np.asarray(c, dtype=float).reshape(-1)
    if qs.ndim != 2 or qs.shape[1] != 3 or pc.shape != qs.shape or len(c) != len(qs):
        raise InputError("expected (N, 3), (N, 3), (N,) arrays")
    if not (np.all(np.isfinite(qs)) and np.all(np.isfinite(pc)) and np.all(np.isfinite(c))):
        raise InputError("non-finite input to Procrustes solve")
    return qs, pc, c


def cross_covariance(qs, pc, c) -> np.ndarray:
    """Weighted cross-covariance ``pc^T diag(c) qs`` (3x3)."""
    return (pc * c[:, None]).T @ qs


def rotation_from_covariance(A: np.ndarray) -> tuple[np.ndarray, np.ndarray, bool]:
    """Closest proper rotation for a cross-covariance; returns (R, singular values, degenerate)."""
    U, S, Vt = np.linalg.svd(A)
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    if d == 0:
        d = 1.0
    R = U @ np.diag([1.0, 1.0, d]) @ Vt
    degenerate = bool(S[0] == 0 or S[1] <= DEGENERATE_RATIO * S[0])
    return R, S, degenerate


def solve_rotation(qs, pc, c, return_diagnostics: bool = False):
    """Rotation minimizing the weighted squared residual ``R qs_k - pc_k``.

    Collinear or coincident data only flags degeneracy; a valid rotation is
    still returned.
    """
    qs, pc, c = _check_triplet(qs, pc, c)
    if len(qs) < 3:
        raise InputError("at least 3 points are required")
    if np.any(c < 0):
        raise InputError("weights must be non-negative")
    R, S, degenerate = rotation_from_covariance(cross_covariance(qs, pc, c))
    if return_diagnostics:
        return R, S, degenerate
    return R


def weighted_mean(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    total = c.sum()
    if not total > 0:
        raise InputError("weights sum to zero")
    return (c[:, None] * x).sum(axis=0) / total


def refine_translation(t_init, pc, qs, c, R) -> np.ndarray:
    """``t_init + mu_c(pc) - R mu_c(qs)`` with ``mu_c`` the c-weighted mean."""
    qs, pc, c = _check_triplet(qs, pc, c)
    return np.asarray(t_init, dtype=float) + weighted_mean(pc, c) - R @ weighted_mean(qs, c)


def solve_alignment(corr: CorrespondenceSet, s, t_init, weights=None, centered: bool = True) -> SolveReport:
    """Full solve: scale the NOCs, offset the camera points by ``t_init``, rotate, refine translation.

    ``weights`` overrides ``corr.c`` when given.  With ``centered`` the rotation
    is solved on c-weighted-mean-centered points, which makes it independent of
    ``t_init``; otherwise the raw offset points enter the cross-covariance and
    any error in ``t_init`` biases the rotation.
    """
    s = np.asarray(s, dtype=float).reshape(3)
    if np.any(s <= 0):
        raise InputError("scale must be positive")
    t_init = np.asarray(t_init, dtype=float).reshape(3)
    c = corr.c if weights is None else np.asarray(weights, dtype=float)
    qs = corr.q * s
    pc = corr.p - t_init
    if centered:
        R, S, degenerate = solve_rotation(
            qs - weighted_mean(qs, c), pc - weighted_mean(pc, c), c, return_diagnostics=True
        )
    else:
        R, S, degenerate = solve_rotation(qs, pc, c, return_diagnostics=True)
    if degenerate:
        log.warning("degenerate correspondence set: singular values %s", S)
    t = refine_translation(t_init, pc, qs, c, R)
    return SolveReport(Pose9DoF(t, s, R), S, degenerate, c)


def tukey_weight(r: np.ndarray) -> np.ndarray:
    r = np.abs(r)
    w = np.where(r < 1.0, (1.0 - r**2) ** 2, 0.0)
    return np.maximum(w, WEIGHT_FLOOR)


def huber_weight(r: np.ndarray) -> np.ndarray:
    return 1.0 / np.maximum(np.abs(r), 1.0)


KERNELS = {"tukey": tukey_weight, "huber": huber_weight}


def irls_weights(qs, pc, R, kernel: str = "tukey", scale: float = 1.0) -> np.ndarray:
    """Robust weights from normalized residual norms ``||R qs_k - pc_k|| / scale``.

    ``pc`` must already be centered by the refined translation.
    """
    if not scale > 0:
        raise InputError("residual scale must be positive")
    try:
        fn = KERNELS[kernel]
    except KeyError:
        raise InputError(f"unknown kernel {kernel!r}") from None
    r = np.linalg.norm(np.asarray(qs) @ R.T - np.asarray(pc), axis=1) / scale
    return fn(r)


def residual_norms(corr: CorrespondenceSet, pose: Pose9DoF) -> np.ndarray:
    return np.linalg.norm((corr.q * pose.s) @ pose.R.T + pose.t - corr.p, axis=1)


def robust_scale(res: np.ndarray, kernel: str) -> float:
    """Kernel cutoff from the median residual norm (MAD-style)."""
    sigma = MAD_TO_SIGMA * float(np.median(res))
    k = TUKEY_C if kernel == "tukey" else 1.345
    return max(k * sigma, 1e-12)


def solve_irls(
    corr: CorrespondenceSet,
    s,
    t_init,
    kernel: str = "tukey",
    rounds: int = 3,
    scale: float | None = None,
    centered: bool = True,
) -> SolveReport:
    """Reweighted solve: ``rounds`` passes of robust weights on top of ``corr.c``.

    With ``scale=None`` the kernel cutoff is re-estimated each round from the
    median residual.
    """
    report = solve_alignment(corr, s, t_init, centered=centered)
    for _ in range(rounds):
        res = residual_norms(corr, report.pose)
        sc = robust_scale(res, kernel) if scale is None else scale
        qs = corr.q * report.pose.s
        pc = corr.p - report.pose.t
        w = irls_weights(qs, pc, report.pose.R, kernel, sc)
        report = solve_alignment(corr, s, t_init, weights=corr.c * w, centered=centered)
    return report


def refine_scale(corr: CorrespondenceSet, s0, t_init, rounds: int = 3, weights=None) -> SolveReport:
    """Alternate per-axis least-squares scale with the rotation solve.

    Extension beyond the fixed-scale solve: given R and t, each scale axis is
    the weighted least-squares fit of ``R^T (p - t)`` against ``q`` on that axis.
    """
    c = corr.c if weights is None else np.asarray(weights, dtype=float)
    s = np.asarray(s0, dtype=float).reshape(3)
    report = solve_alignment(corr, s, t_init, weights=c)
    for _ in range(rounds):
        local = (corr.p - report.pose.t) @ report.pose.R
        num = (c[:, None] * local * corr.q).sum(axis=0)
        den = (c[:, None] * corr.q**2).sum(axis=0)
        s = np.where((den > 0) & (num > 0), num / np.where(den > 0, den, 1.0), s)
        report = solve_alignment(corr, s, t_init, weights=c)
    return report
