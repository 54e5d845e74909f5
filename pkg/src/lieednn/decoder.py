"""Decode network states into rigid-body poses via the exponential map."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Pose, compose, exp_se3, is_rotation, unparameterize
from .network import Trajectory


def decode_state(xi_block) -> Pose:
    """Pose Exp(xi^) for one neuron's [omega, v] block."""
    xi_block = np.asarray(xi_block, dtype=float)
    if not np.all(np.isfinite(xi_block)):
        raise ValueError("state block must be finite")
    return exp_se3(unparameterize(xi_block))


@dataclass
class PoseTrajectory:
    """Per-time, per-neuron poses; `chain_*` hold the base-to-tip product when requested."""

    times: np.ndarray
    rotations: np.ndarray  # (K, N, 3, 3)
    translations: np.ndarray  # (K, N, 3)
    chain_rotations: np.ndarray | None = None  # (K, 3, 3)
    chain_translations: np.ndarray | None = None  # (K, 3)

    @property
    def n_neurons(self) -> int:
        return self.rotations.shape[1]

    def pose(self, k: int, i: int) -> Pose:
        return Pose(self.rotations[k, i], self.translations[k, i])

    def chain(self, k: int) -> Pose:
        if self.chain_rotations is None:
            raise ValueError("trajectory was decoded without the chain")
        return Pose(self.chain_rotations[k], self.chain_translations[k])

    def max_orthonormality_error(self) -> float:
        r = self.rotations.reshape(-1, 3, 3)
        if self.chain_rotations is not None:
            r = np.concatenate([r, self.chain_rotations])
        rtr = np.einsum("kji,kjl->kil", r, r) - np.eye(3)
        orth = np.sqrt((rtr**2).sum(axis=(1, 2))).max()
        det = np.abs(np.linalg.det(r) - 1.0).max()
        return float(max(orth, det))


def decode_states(states, times=None, compose_chain: bool = False) -> PoseTrajectory:
    states = np.atleast_2d(np.asarray(states, dtype=float))
    k, d = states.shape
    if d % 6:
        raise ValueError("state width must be a multiple of 6")
    n = d // 6
    rots = np.empty((k, n, 3, 3))
    trans = np.empty((k, n, 3))
    chain_r = np.empty((k, 3, 3)) if compose_chain else None
    chain_p = np.empty((k, 3)) if compose_chain else None
    for a in range(k):
        acc = Pose.identity()
        for i in range(n):
            g = decode_state(states[a, 6 * i : 6 * i + 6])
            rots[a, i], trans[a, i] = g.r, g.p
            if compose_chain:
                acc = compose(acc, g)
        if compose_chain:
            chain_r[a], chain_p[a] = acc.r, acc.p
    t = np.arange(k, dtype=float) if times is None else np.asarray(times, dtype=float)
    return PoseTrajectory(t, rots, trans, chain_r, chain_p)


def decode_trajectory(traj: Trajectory, compose_chain: bool = False) -> PoseTrajectory:
    return decode_states(traj.states, traj.times, compose_chain)


def poses_valid(pt: PoseTrajectory, tol: float = 1e-9) -> bool:
    return all(
        is_rotation(r, tol, tol)
        for r in pt.rotations.reshape(-1, 3, 3)
    ) and (pt.chain_rotations is None or all(is_rotation(r, tol, tol) for r in pt.chain_rotations))
