"""Metric projections onto SO(3) and onto the adjoint-image manifold.

The SO(3) projection is the Frobenius-nearest rotation
U diag(1, 1, det(U V^T)) V^T. The 6x6 projection works block-wise:
R = Proj((A + D) / 2), hat(t) = (C R^T - R C^T) / 2, B -> 0.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .network import StructuredWeights

ALPHA_FLOOR = 1e-8
DEGENERACY_TOL = 1e-12


@dataclass(frozen=True)
class SO3Projection:
    rotation: np.ndarray
    singular_values: np.ndarray
    det_sign: float
    degenerate: bool


def project_so3_full(pi) -> SO3Projection:
    """Nearest rotation plus SVD diagnostics.

    The minimizer is non-unique exactly when sigma2 + d*sigma3 vanishes,
    d = det(U V^T); `degenerate` flags that case.
    """
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (3, 3) or not np.all(np.isfinite(pi)):
        raise ValueError("expected a finite 3x3 matrix")
    u, s, vt = np.linalg.svd(pi)
    d = 1.0 if np.linalg.det(u @ vt) >= 0 else -1.0
    r = (u * np.array([1.0, 1.0, d])) @ vt
    scale = max(s[0], 1.0)
    degenerate = bool(s[1] + d * s[2] <= DEGENERACY_TOL * scale)
    return SO3Projection(r, s, d, degenerate)


def project_so3(pi) -> np.ndarray:
    return project_so3_full(pi).rotation


def so3_trace_identity(pi) -> tuple[float, float]:
    """Return (tr(Pi^T Proj(Pi)), sigma1 + sigma2 + d*sigma3)."""
    res = project_so3_full(pi)
    s = res.singular_values
    lhs = float(np.trace(np.asarray(pi, dtype=float).T @ res.rotation))
    return lhs, float(s[0] + s[1] + res.det_sign * s[2])


@dataclass(frozen=True)
class AdjointProjection:
    matrix: np.ndarray
    rotation: np.ndarray
    translation: np.ndarray
    degenerate: bool


def project_adjoint_full(theta) -> AdjointProjection:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (6, 6) or not np.all(np.isfinite(theta)):
        raise ValueError("expected a finite 6x6 matrix")
    a, c, d = theta[:3, :3], theta[3:, :3], theta[3:, 3:]
    so3 = project_so3_full(0.5 * (a + d))
    r = so3.rotation
    t_hat = 0.5 * (c @ r.T - r @ c.T)
    out = np.zeros((6, 6))
    out[:3, :3] = r
    out[3:, 3:] = r
    out[3:, :3] = t_hat @ r
    t = np.array([t_hat[2, 1], t_hat[0, 2], t_hat[1, 0]])
    return AdjointProjection(out, r, t, so3.degenerate)


def project_adjoint(theta) -> np.ndarray:
    return project_adjoint_full(theta).matrix


def block_distance(theta) -> float:
    """Frobenius distance from a 6x6 block to its block-wise projection."""
    theta = np.asarray(theta, dtype=float)
    return float(np.linalg.norm(theta - project_adjoint(theta)))


def project_weights(w: StructuredWeights, alpha_floor: float = ALPHA_FLOOR) -> StructuredWeights:
    """Project every block W_ij / alpha_ij and rescale by alpha_ij."""
    n = w.n_neurons
    blocks = np.empty_like(w.blocks)
    for i in range(n):
        for j in range(n):
            if abs(w.alpha[i, j]) < alpha_floor:
                warnings.warn(
                    f"|alpha[{i},{j}]| below floor {alpha_floor:g}; block reset to identity",
                    RuntimeWarning,
                    stacklevel=2,
                )
                blocks[i, j] = np.eye(6)
            else:
                blocks[i, j] = project_adjoint(w.blocks[i, j])
    return StructuredWeights(w.alpha.copy(), blocks)


def block_deviation(w: StructuredWeights) -> float:
    """Largest per-block distance to the manifold, measured on W_ij / alpha_ij."""
    n = w.n_neurons
    return max(block_distance(w.blocks[i, j]) for i in range(n) for j in range(n))
