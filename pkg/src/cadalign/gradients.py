"""Analytic gradients of the alignment loss through the Procrustes solve.

Only the rotation and refined-translation terms depend on the
correspondences, so the loss differentiated here is
``w_rot * ||R - R_gt||_1 + w_trans * ||t - t_gt||_2``.  The SVD differential follows the
usual antisymmetric parametrization ``dU = U Wu``, ``dV = V Wv``; the
determinant-correction sign is held constant.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IllConditionedGradientError, InputError, OracleError
from .geometry import Pose9DoF, random_rotation
from .losses import LossWeights
from .procrustes import CorrespondenceSet, cross_covariance, rotation_from_covariance, weighted_mean

REPEATED_TOL = 1e-8
CONDITION_TOL = 1e-6


@dataclass
class GradBundle:
    d_qs: np.ndarray
    d_pc: np.ndarray
    d_c: np.ndarray
    d_t_init: np.ndarray
    loss: float

    def flat(self) -> np.ndarray:
        return np.concatenate([self.d_qs.ravel(), self.d_pc.ravel(), self.d_c, self.d_t_init])


def _sign(x):
    # sign(0) = 0 subgradient convention
    return np.sign(x)


def rotation_jacobian(A: np.ndarray) -> np.ndarray:
    """d vec(R) / d vec(A) (row-major, 9x9) for ``R = U diag(1,1,d) V^T``."""
    U, S, Vt = np.linalg.svd(A)
    V = Vt.T
    if S[1] <= CONDITION_TOL * S[0]:
        raise IllConditionedGradientError(f"rank-deficient covariance, singular values {S}")
    gaps = np.abs(S[:, None] - S[None, :])[np.triu_indices(3, 1)]
    if np.any(gaps <= REPEATED_TOL * S[0]):
        raise IllConditionedGradientError(f"repeated singular values {S}")
    d = np.sign(np.linalg.det(V @ U.T)) or 1.0
    D = np.diag([1.0, 1.0, d])
    sq = S**2
    denom = sq[None, :] - sq[:, None]  # sigma_j^2 - sigma_i^2
    np.fill_diagonal(denom, 1.0)
    J = np.empty((9, 9))
    for e in range(9):
        dA = np.zeros(9)
        dA[e] = 1.0
        P = U.T @ dA.reshape(3, 3) @ V
        Wu = (P * S[None, :] + P.T * S[:, None]) / denom
        Wv = (P * S[:, None] + P.T * S[None, :]) / denom
        np.fill_diagonal(Wu, 0.0)
        np.fill_diagonal(Wv, 0.0)
        dR = U @ (Wu @ D - D @ Wv) @ Vt
        J[:, e] = dR.ravel()
    return J


def _covariance(qs, pc, c, centered: bool) -> np.ndarray:
    if centered:
        return cross_covariance(qs - weighted_mean(qs, c), pc - weighted_mean(pc, c), c)
    return cross_covariance(qs, pc, c)


def alignment_objective(
    qs, pc, c, t_init, gt: Pose9DoF, weights: LossWeights | None = None, centered: bool = True
) -> float:
    """Forward value of the differentiated loss; used as the finite-difference target."""
    w = weights or LossWeights()
    c = np.asarray(c, dtype=float)
    R, _, _ = rotation_from_covariance(_covariance(qs, pc, c, centered))
    t = np.asarray(t_init) + weighted_mean(pc, c) - R @ weighted_mean(qs, c)
    return float(w.w_rot * np.abs(R - gt.R).sum() + w.w_trans * np.linalg.norm(t - gt.t))


def grad_alignment(
    corr: CorrespondenceSet,
    s,
    t_init,
    gt_pose: Pose9DoF,
    loss_weights: LossWeights | None = None,
    pc=None,
    centered: bool = True,
) -> GradBundle:
    """Partials of ``w_rot*L_rot + w_trans*L_trans`` w.r.t. scaled NOCs, centered points, weights and t_init.

    ``pc`` overrides ``corr.p - t_init`` so the centered points can be held
    fixed while ``t_init`` varies.
    """
    w = loss_weights or LossWeights()
    s = np.asarray(s, dtype=float).reshape(3)
    t_init = np.asarray(t_init, dtype=float).reshape(3)
    qs = corr.q * s
    pc = corr.p - t_init if pc is None else np.asarray(pc, dtype=float)
    if pc.shape != qs.shape:
        raise InputError("centered points must match the NOC array")
    c = corr.c
    W = c.sum()

    mu_p = weighted_mean(pc, c)
    mu_q = weighted_mean(qs, c)
    A = _covariance(qs, pc, c, centered)
    R, _, _ = rotation_from_covariance(A)
    t = t_init + mu_p - R @ mu_q
    err = t - gt_pose.t
    norm = np.linalg.norm(err)
    g_t = w.w_trans * err / norm if norm > 0 else np.zeros(3)
    loss = float(w.w_rot * np.abs(R - gt_pose.R).sum() + w.w_trans * norm)

    # dL/dR from the rotation term and from t's dependence on R
    g_R = w.w_rot * _sign(R - gt_pose.R) - np.outer(g_t, mu_q)
    g_A = (rotation_jacobian(A).T @ g_R.ravel()).reshape(3, 3)

    # A = sum_k c_k a_k b_k^T; centering subtracts the weighted means, whose
    # own derivatives cancel because the centered points sum to zero
    a, b = (pc - mu_p, qs - mu_q) if centered else (pc, qs)
    d_pc = c[:, None] * (b @ g_A.T)
    d_qs = c[:, None] * (a @ g_A)
    d_c = np.einsum("ki,ij,kj->k", a, g_A, b)

    # translation path through the weighted means
    d_pc += (c / W)[:, None] * g_t
    d_qs -= (c / W)[:, None] * (R.T @ g_t)
    d_c += ((pc - mu_p) @ g_t - (qs - mu_q) @ (R.T @ g_t)) / W
    return GradBundle(d_qs, d_pc, d_c, g_t.copy(), loss)


def finite_difference(f, x, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector."""
    if not h > 0:
        raise InputError("step must be positive")
    x = np.asarray(x, dtype=float).ravel()
    g = np.empty_like(x)
    for i in range(len(x)):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        fp, fm = f(xp), f(xm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise OracleError(f"non-finite evaluation at coordinate {i}")
        g[i] = (fp - fm) / (2 * h)
    return g


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """Per-coordinate ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic).ravel()
    n = np.asarray(numeric).ravel()
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def random_instance(seed: int, n: int = 32, kink_margin: float = 1e-3):
    """Well-conditioned random problem: noisy correspondences and an unrelated GT pose.

    Redraws until every rotation residual entry is at least ``kink_margin``
    away from the l1 kink and the singular values are well separated.
    """
    rng = np.random.default_rng(seed)
    while True:
        q = rng.uniform(-0.5, 0.5, size=(n, 3)) * np.array([1.0, 0.7, 0.4])
        s = rng.uniform(0.5, 2.0, size=3)
        R_true = random_rotation(rng)
        t_true = rng.uniform(-1, 1, size=3) + np.array([0, 0, 3.0])
        p = (q * s) @ R_true.T + t_true + rng.normal(scale=0.05, size=(n, 3))
        c = rng.uniform(0.2, 1.0, size=n)
        corr = CorrespondenceSet(q, p, c)
        t_init = t_true + rng.normal(scale=0.1, size=3)
        gt = Pose9DoF(t_true + rng.normal(scale=0.1, size=3), s, _perturb(R_true, rng))
        ok = True
        for centered in (True, False):
            A = _covariance(q * s, p - t_init, c, centered)
            S = np.linalg.svd(A, compute_uv=False)
            R, _, _ = rotation_from_covariance(A)
            if np.min(np.abs(R - gt.R)) < kink_margin:
                ok = False
            if np.min(np.diff(-S)) < 1e-3 * S[0] or S[2] < 1e-3 * S[0]:
                ok = False
        if ok:
            return corr, s, t_init, gt


def _perturb(R: np.ndarray, rng: np.random.Generator, angle: float = 0.3) -> np.ndarray:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    K = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    dR = np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * K @ K
    return dR @ R


def check_gradients(
    corr, s, t_init, gt, weights: LossWeights | None = None, h: float = 1e-5, centered: bool = True
) -> float:
    """Max per-coordinate relative error between analytic and central-difference gradients."""
    n = len(corr)
    qs0 = corr.q * np.asarray(s)
    pc0 = corr.p - t_init
    x0 = np.concatenate([qs0.ravel(), pc0.ravel(), corr.c, t_init])

    def f(x):
        qs = x[: 3 * n].reshape(n, 3)
        pc = x[3 * n : 6 * n].reshape(n, 3)
        c = x[6 * n : 7 * n]
        return alignment_objective(qs, pc, c, x[7 * n :], gt, weights, centered)

    numeric = finite_difference(f, x0, h)
    analytic = grad_alignment(corr, s, t_init, gt, weights, centered=centered).flat()
    return float(relative_error(analytic, numeric).max())


def gradcheck(seed: int, n: int = 32, h: float = 1e-5, centered: bool = True) -> float:
    corr, s, t_init, gt = random_instance(seed, n)
    return check_gradients(corr, s, t_init, gt, h=h, centered=centered)
