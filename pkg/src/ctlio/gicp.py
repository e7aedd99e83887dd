"""Plane-to-plane Generalized-ICP.

Per-point covariances come from k nearest neighbours and are regularised to
eigenvalues ``(1, 1, ε)``. Alignment is Gauss-Newton on the Mahalanobis
objective with a left-multiplied rotation-vector increment, re-associating
nearest neighbours every outer iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .core import Pose, TimedPointCloud, pose_compose, so3_exp


class DegenerateRegistration(RuntimeError):
    """Too few correspondences to register."""


@dataclass(frozen=True)
class GicpParams:
    k_neighbors: int = 10
    epsilon: float = 1e-3
    max_corr_dist: float = 0.5
    max_iterations: int = 32
    trans_eps: float = 1e-4
    rot_eps: float = 1e-4
    min_correspondences: int = 20
    max_halvings: int = 8


@dataclass
class PointCovariances:
    matrices: np.ndarray
    n_fallback: int = 0

    def __len__(self) -> int:
        return len(self.matrices)

    def rotated(self, R: np.ndarray) -> "PointCovariances":
        return PointCovariances(rotate_covariances(self.matrices, R), self.n_fallback)

    @classmethod
    def concatenate(cls, parts) -> "PointCovariances":
        parts = list(parts)
        if not parts:
            return cls(np.zeros((0, 3, 3)))
        return cls(np.concatenate([p.matrices for p in parts]), sum(p.n_fallback for p in parts))

    @classmethod
    def identity(cls, n: int) -> "PointCovariances":
        return cls(np.broadcast_to(np.eye(3), (n, 3, 3)).copy())


@dataclass(frozen=True)
class Correspondence:
    src_index: int
    tgt_index: int
    squared_distance: float


@dataclass
class AlignResult:
    delta: Pose
    final_cost: float
    iterations: int
    converged: bool
    n_correspondences: int = 0
    cost_history: list = field(default_factory=list)


def rotate_covariances(C: np.ndarray, R: np.ndarray) -> np.ndarray:
    """``R C_n Rᵀ`` for a stack of matrices, as two plain matrix products."""
    n = len(C)
    Y = (C.reshape(-1, 3) @ R.T).reshape(n, 3, 3)
    return (Y.transpose(0, 2, 1).reshape(-1, 3) @ R.T).reshape(n, 3, 3).transpose(0, 2, 1)


def inv_sym3(C: np.ndarray) -> np.ndarray:
    """Cofactor inverse of a stack of symmetric positive-definite 3x3 matrices."""
    a, b, c = C[:, 0, 0], C[:, 0, 1], C[:, 0, 2]
    e, f, i = C[:, 1, 1], C[:, 1, 2], C[:, 2, 2]
    A = e * i - f * f
    B = c * f - b * i
    D = b * f - c * e
    E = a * i - c * c
    F = b * c - a * f
    I = a * e - b * b
    det = a * A + b * B + c * D
    out = np.stack([A, B, D, B, E, F, D, F, I], axis=-1).reshape(-1, 3, 3)
    return out / det[:, None, None]


def build_tree(xyz: np.ndarray) -> cKDTree:
    return cKDTree(xyz, balanced_tree=False, compact_nodes=False)


def _xyz(cloud) -> np.ndarray:
    return cloud.xyz if isinstance(cloud, TimedPointCloud) else np.asarray(cloud, dtype=float)


def estimate_covariances(cloud, k_neighbors: int = 10, epsilon: float = 1e-3, tree: cKDTree | None = None) -> PointCovariances:
    """Neighbourhood covariances regularised to ``(1, 1, ε)``.

    The neighbourhood includes the point itself. Neighbourhoods of rank < 2
    (collinear or coincident points) fall back to the identity and are
    counted in ``n_fallback``.
    """
    xyz = _xyz(cloud)
    n = len(xyz)
    if k_neighbors < 4:
        raise ValueError("k_neighbors must be >= 4")
    if n < k_neighbors:
        raise ValueError(f"cloud has {n} points, fewer than k={k_neighbors}")
    tree = tree if tree is not None else build_tree(xyz)
    _, idx = tree.query(xyz, k=k_neighbors)
    nb = xyz[idx]
    centred = nb - nb.mean(axis=1, keepdims=True)
    cov = centred.transpose(0, 2, 1) @ centred / k_neighbors
    vals, vecs = np.linalg.eigh(cov)
    scale = np.maximum(vals[:, 2], 1e-300)
    degenerate = vals[:, 1] <= 1e-10 * scale + 1e-20
    reg = np.array([epsilon, 1.0, 1.0])
    out = (vecs * reg) @ vecs.transpose(0, 2, 1)
    out = 0.5 * (out + out.transpose(0, 2, 1))
    out[degenerate] = np.eye(3)
    return PointCovariances(out, int(np.count_nonzero(degenerate)))


def find_correspondences(src_xyz: np.ndarray, tree: cKDTree, max_corr_dist: float) -> list[Correspondence]:
    d, j = tree.query(src_xyz, distance_upper_bound=max_corr_dist)
    ok = np.isfinite(d)
    return [Correspondence(int(i), int(j[i]), float(d[i] ** 2)) for i in np.nonzero(ok)[0]]


def _normal_equations(M: np.ndarray, Tp: np.ndarray, d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``H = Σ JᵀMJ`` and ``g = Σ JᵀMd`` for ``J = [[Tp]×, -I]`` without forming J.

    With ``S = [Tp]×``, ``Sx = Tp × x`` and ``Sᵀ = -S``.
    """
    Md = np.einsum("nij,nj->ni", M, d)
    SM = np.cross(Tp[:, None, :], M.transpose(0, 2, 1)).transpose(0, 2, 1)
    StMS = np.cross(Tp[:, None, :], SM).transpose(0, 2, 1)
    H = np.empty((6, 6))
    H[:3, :3] = StMS.sum(axis=0)
    H[:3, 3:] = SM.sum(axis=0)
    H[3:, :3] = H[:3, 3:].T
    H[3:, 3:] = M.sum(axis=0)
    g = np.concatenate([-np.cross(Tp, Md).sum(axis=0), -Md.sum(axis=0)])
    return H, g


def _mahalanobis(d: np.ndarray, M: np.ndarray) -> float:
    return float(np.sum(d * np.einsum("nij,nj->ni", M, d)))


def align(src, src_cov: PointCovariances | None, tgt, tgt_cov: PointCovariances | None, params: GicpParams = GicpParams(), tree: cKDTree | None = None) -> AlignResult:
    """Find the world-frame correction ``ΔT`` that best maps ``src`` onto ``tgt``.

    ``src`` is expected to be prior-aligned already. Passing ``None`` for
    both covariances gives plain point-to-point ICP.
    """
    src_xyz, tgt_xyz = _xyz(src), _xyz(tgt)
    if len(src_xyz) == 0 or len(tgt_xyz) == 0:
        raise DegenerateRegistration("empty cloud")
    tree = tree if tree is not None else build_tree(tgt_xyz)
    Csrc = None if src_cov is None else src_cov.matrices
    Ctgt = None if tgt_cov is None else tgt_cov.matrices
    R = np.eye(3)
    t = np.zeros(3)
    history = []
    converged = False
    it = 0
    n_corr = 0
    for it in range(1, params.max_iterations + 1):
        P = src_xyz @ R.T + t
        dist, j = tree.query(P, distance_upper_bound=params.max_corr_dist)
        valid = np.isfinite(dist)
        n_corr = int(np.count_nonzero(valid))
        if n_corr < params.min_correspondences:
            raise DegenerateRegistration(f"{n_corr} correspondences < {params.min_correspondences}")
        ps = src_xyz[valid]
        jj = j[valid]
        s = tgt_xyz[jj]
        C = Ctgt[jj] if Ctgt is not None else np.broadcast_to(np.eye(3), (n_corr, 3, 3))
        C = C + (rotate_covariances(Csrc[valid], R) if Csrc is not None else np.eye(3))
        M = inv_sym3(C)

        Tp = ps @ R.T + t
        d = s - Tp
        cost0 = _mahalanobis(d, M)
        H, g = _normal_equations(M, Tp, d)
        try:
            delta = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            delta = -np.linalg.lstsq(H, g, rcond=None)[0]

        step = 1.0
        for _ in range(params.max_halvings + 1):
            dR = so3_exp(step * delta[:3])
            R_new = dR @ R
            t_new = dR @ t + step * delta[3:]
            cost1 = _mahalanobis(s - (ps @ R_new.T + t_new), M)
            if cost1 <= cost0:
                break
            step *= 0.5
        else:
            R_new, t_new, cost1 = R, t, cost0
            step = 0.0
        history.append((cost0, cost1))
        R, t = R_new, t_new
        if np.linalg.norm(step * delta[3:]) < params.trans_eps and np.linalg.norm(step * delta[:3]) < params.rot_eps:
            converged = True
            break

    P = src_xyz @ R.T + t
    dist, j = tree.query(P, distance_upper_bound=params.max_corr_dist)
    valid = np.isfinite(dist)
    n_corr = int(np.count_nonzero(valid))
    d = tgt_xyz[j[valid]] - P[valid]
    C = (Ctgt[j[valid]] if Ctgt is not None else np.eye(3)) + (rotate_covariances(Csrc[valid], R) if Csrc is not None else np.eye(3))
    final_cost = _mahalanobis(d, inv_sym3(np.broadcast_to(C, (n_corr, 3, 3)))) if n_corr else 0.0
    return AlignResult(Pose.from_matrix(_rt(R, t)), final_cost, it, converged, n_corr, history)


def _rt(R, t) -> np.ndarray:
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = t
    return T


def refine_pose(prior_last: Pose, delta: Pose) -> Pose:
    """Globally refined pose ``ΔT ∘ T_prior``."""
    return pose_compose(delta, prior_last)
