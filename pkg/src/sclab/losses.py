"""Point-set distance kernels and the composite completion objective.

Gradients treat nearest-neighbour assignments as locally constant (the
usual subgradient of a min over points).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from sclab.geometry.kdtree import KDTree
from sclab.geometry.types import as_points

N_LEVELS = 4


def _nonempty(*clouds) -> list[np.ndarray]:
    out = [as_points(c) for c in clouds]
    if any(len(c) == 0 for c in out):
        raise ValueError("empty point set")
    return out


def nn_assign(P, Q) -> tuple[np.ndarray, np.ndarray]:
    """For each row of P: (index of nearest point in Q, squared distance)."""
    P, Q = _nonempty(P, Q)
    return KDTree(Q).query(P)


def one_sided_chamfer(P, Q) -> float:
    return float(nn_assign(P, Q)[1].mean())


def chamfer(P, Q) -> float:
    P, Q = _nonempty(P, Q)
    return float(nn_assign(P, Q)[1].mean() + nn_assign(Q, P)[1].mean())


def uhd(P, Q) -> float:
    """Largest Euclidean (not squared) distance from a point of P to Q."""
    return float(np.sqrt(nn_assign(P, Q)[1].max()))


def normal_cosine_loss(n_pred, n_gt) -> float:
    a = as_points(n_pred)
    b = as_points(n_gt)
    if len(a) != len(b):
        raise ValueError("normal counts differ")
    if len(a) == 0:
        raise ValueError("empty point set")
    return float(np.mean(1.0 - np.einsum("ij,ij->i", a, b)))


def chamfer_with_grad(P, Q) -> tuple[float, np.ndarray, np.ndarray]:
    P, Q = _nonempty(P, Q)
    ip, dp = nn_assign(P, Q)
    iq, dq = nn_assign(Q, P)
    gP = np.zeros_like(P)
    gQ = np.zeros_like(Q)
    rp = 2.0 * (P - Q[ip]) / len(P)
    gP += rp
    np.add.at(gQ, ip, -rp)
    rq = 2.0 * (Q - P[iq]) / len(Q)
    gQ += rq
    np.add.at(gP, iq, -rq)
    return float(dp.mean() + dq.mean()), gP, gQ


def one_sided_chamfer_with_grad(P, Q) -> tuple[float, np.ndarray, np.ndarray]:
    P, Q = _nonempty(P, Q)
    ip, dp = nn_assign(P, Q)
    r = 2.0 * (P - Q[ip]) / len(P)
    gQ = np.zeros_like(Q)
    np.add.at(gQ, ip, -r)
    return float(dp.mean()), r, gQ


@dataclass(frozen=True)
class LossWeights:
    lambda_c: float = 1.0
    lambda_p: float = 1.0
    lambda_o: float = 1.0
    lambda_n: float = 1e-2

    def __post_init__(self):
        if min(self.lambda_c, self.lambda_p, self.lambda_o, self.lambda_n) < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class CompletionLevels:
    """Coarse-to-dense completions C^0..C^3, dense normals and the object center."""

    levels: list[np.ndarray]
    normals: np.ndarray
    center: np.ndarray

    def __post_init__(self):
        self.levels = [as_points(c) for c in self.levels]
        self.normals = as_points(self.normals, name="normals")
        self.center = np.asarray(self.center, dtype=np.float64).reshape(3)
        if len(self.levels) != N_LEVELS:
            raise ValueError(f"expected {N_LEVELS} levels")
        for a, b in zip(self.levels, self.levels[1:]):
            if len(b) != 2 * len(a):
                raise ValueError("each level must double the previous one")
        if len(self.normals) != len(self.levels[-1]):
            raise ValueError("normals must match the densest level")


@dataclass
class LossGradients:
    levels: list[np.ndarray]
    normals: np.ndarray
    center: np.ndarray
    terms: dict[str, float] = field(default_factory=dict)


def total_loss(pred: CompletionLevels, gt_levels, partial, center_gt, normals_gt,
               w: LossWeights = LossWeights()) -> tuple[float, LossGradients]:
    """Weighted sum of per-level Chamfer, partial-to-completion one-sided
    Chamfer, center MSE (averaged over xyz) and the ``1 - cos`` normal loss."""
    gt_levels = [as_points(g) for g in gt_levels]
    if len(gt_levels) != N_LEVELS:
        raise ValueError(f"expected {N_LEVELS} ground-truth levels")
    for j, (c, g) in enumerate(zip(pred.levels, gt_levels)):
        if len(c) != len(g):
            raise ValueError(f"level {j}: {len(c)} predicted vs {len(g)} ground-truth points")
    partial = as_points(partial)
    normals_gt = as_points(normals_gt, name="normals_gt")
    if len(normals_gt) != len(pred.normals):
        raise ValueError("normal counts differ")
    center_gt = np.asarray(center_gt, dtype=np.float64).reshape(3)

    grads = [np.zeros_like(c) for c in pred.levels]
    cd_sum = 0.0
    ocd_sum = 0.0
    for j, (c, g) in enumerate(zip(pred.levels, gt_levels)):
        v, gc, _ = chamfer_with_grad(c, g)
        cd_sum += v
        grads[j] += w.lambda_c * gc
        v, _, gc = one_sided_chamfer_with_grad(partial, c)
        ocd_sum += v
        grads[j] += w.lambda_p * gc
    diff = pred.center - center_gt
    mse = float(np.mean(diff ** 2))
    g_center = w.lambda_o * 2.0 * diff / 3.0
    cs = normal_cosine_loss(pred.normals, normals_gt)
    g_normals = -w.lambda_n * normals_gt / len(normals_gt)
    value = w.lambda_c * cd_sum + w.lambda_p * ocd_sum + w.lambda_o * mse + w.lambda_n * cs
    terms = {"cd": cd_sum, "ocd": ocd_sum, "center_mse": mse, "normal_cs": cs}
    return float(value), LossGradients(grads, g_normals, g_center, terms)
