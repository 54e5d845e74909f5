"""Equilibrium learning with periodic projection onto the adjoint manifold.

The target is a prescribed equilibrium xi_d. Each epoch solves the dynamics to
equilibrium, takes a step on W, and every `proj_period` epochs projects each
block W_ij / alpha_ij back onto L[Ad_SE(3)].
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .network import (
    NetworkParams,
    StructuredWeights,
    activation,
    activation_jacobian,
    normalize,
    split_blocks,
    track_equilibrium,
)
from .projection import ALPHA_FLOOR, block_deviation, project_weights

STEP_RULES = ("newton", "gradient")


class SingularSensitivity(np.linalg.LinAlgError):
    pass


def loss(xi_star, target) -> float:
    d = np.asarray(xi_star, dtype=float) - np.asarray(target, dtype=float)
    return float(np.sqrt(np.dot(d, d)))


def accuracy(xi_star, target, tol: float) -> float:
    """Fraction of entries within tol of the target."""
    d = np.abs(np.asarray(xi_star, dtype=float) - np.asarray(target, dtype=float))
    return float(np.mean(d < tol))


def sensitivity(w, params: NetworkParams, xi_star, cond_max: float = 1e13) -> np.ndarray:
    """S = I - (mu/gamma) W J_phi(xi*)."""
    wm = w.matrix() if isinstance(w, StructuredWeights) else np.asarray(w, dtype=float)
    s = np.eye(wm.shape[0]) - (params.mu / params.gamma) * wm @ activation_jacobian(xi_star, params)
    if not np.isfinite(np.linalg.cond(s)) or np.linalg.cond(s) > cond_max:
        raise SingularSensitivity("sensitivity matrix is numerically singular")
    return s


def grad_weights(w, params: NetworkParams, xi_star, target) -> np.ndarray:
    """dE/dW for E = |xi* - xi_d|_2.

    Entry (i, j) is (mu phi_j / (gamma E)) * (S^-T delta)_i, computed from a
    single solve with S^T.
    """
    delta = np.asarray(xi_star, dtype=float) - np.asarray(target, dtype=float)
    e = np.linalg.norm(delta)
    n = delta.size
    if e == 0.0:
        return np.zeros((n, n))
    s = sensitivity(w, params, xi_star)
    y = np.linalg.solve(s.T, delta)
    return np.outer(y, activation(xi_star, params)) * (params.mu / (params.gamma * e))


def grad_alpha(w: StructuredWeights, params: NetworkParams, xi_star, target, grad_w,
               alpha_floor: float = ALPHA_FLOOR) -> np.ndarray:
    """dE/dalpha_ij = sum over block (i, j) of dE/dw * w / alpha_ij."""
    g = split_blocks(grad_w)
    wb = split_blocks(w.matrix())
    small = np.abs(w.alpha) < alpha_floor
    if np.any(small):
        warnings.warn("strengths below floor; their gradient entries are zeroed",
                      RuntimeWarning, stacklevel=2)
    safe = np.where(small, 1.0, w.alpha)
    out = (g * wb).sum(axis=(2, 3)) / safe
    return np.where(small, 0.0, out)


def grad_alpha_expanded(w: StructuredWeights, grad_w) -> np.ndarray:
    """Same quantity as the chain rule through w_ab = alpha L_ab, summed over L_ab."""
    return (split_blocks(grad_w) * w.blocks).sum(axis=(2, 3))


# ---- training ----------------------------------------------------------------


@dataclass
class TrainConfig:
    target: np.ndarray
    lr_min: float = 0.002
    lr_max: float = 0.2
    lr_init: float = 0.02
    proj_period: int = 10
    tol: float = 1e-5
    max_epochs: int = 25000
    seed: int = 0
    ablate_projection: bool = False
    learn_alpha: bool = False
    alpha_init: str | float = "auto"
    step_rule: str = "newton"
    lr_up: float = 1.2
    lr_down: float = 0.5

    def __post_init__(self):
        self.target = np.asarray(self.target, dtype=float).reshape(-1)
        if not np.all(np.isfinite(self.target)):
            raise ValueError("target must be finite")
        if not (0 < self.lr_min <= self.lr_max):
            raise ValueError("need 0 < lr_min <= lr_max")
        if int(self.proj_period) < 1:
            raise ValueError("proj_period must be >= 1")
        self.proj_period = int(self.proj_period)
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be non-negative")
        if self.step_rule not in STEP_RULES:
            raise ValueError(f"step_rule must be one of {STEP_RULES}")
        if isinstance(self.alpha_init, str) and self.alpha_init not in ("auto", "keep", "block"):
            raise ValueError("alpha_init must be a number or one of auto, keep, block")


@dataclass
class TrainRecord:
    seed: int
    losses: list = field(default_factory=list)
    accuracies: list = field(default_factory=list)
    max_errors: list = field(default_factory=list)
    lrs: list = field(default_factory=list)
    deviation_epochs: list = field(default_factory=list)
    deviations: list = field(default_factory=list)
    weights: StructuredWeights | None = None
    equilibrium: np.ndarray | None = None
    converged: bool = False
    status: str = "running"

    @property
    def epochs(self) -> int:
        return len(self.losses)

    @property
    def final_loss(self) -> float:
        return self.losses[-1] if self.losses else float("nan")

    @property
    def final_deviation(self) -> float:
        return block_deviation(self.weights) if self.weights is not None else float("nan")


def default_setup(n: int = 4, seed: int = 0, b: float = 0.125, gamma: float = 1.0, mu: float = 1.0,
                target_range: float = 0.8):
    """Random normalized initial weights and a random target from one generator.

    Draw order is fixed: the 6N x 6N matrix first, then the target.
    """
    rng = np.random.default_rng(seed)
    params = NetworkParams.uniform(n, b, gamma=gamma, mu=mu)
    w_raw = rng.uniform(-1.0, 1.0, (6 * n, 6 * n))
    target = rng.uniform(-target_range, target_range, 6 * n)
    w0 = normalize(StructuredWeights.from_matrix(w_raw, 1.0), params)
    return w0, params, target


def initial_strengths(w: StructuredWeights, cfg: TrainConfig) -> np.ndarray:
    mode = cfg.alpha_init
    if mode == "auto":
        mode = "block" if cfg.learn_alpha else 0.5
    if mode == "keep":
        return w.alpha.copy()
    if mode == "block":
        # scale of an adjoint matrix with zero translation has Frobenius norm sqrt(6)
        return np.sqrt((split_blocks(w.matrix()) ** 2).sum(axis=(2, 3)) / 6.0)
    return np.full_like(w.alpha, float(mode))


def _step_direction(wm, params, x, delta, rule):
    """Weight-space direction whose first-order effect moves xi* by -delta.

    'newton' is the minimum-norm solution of S dxi = (mu/gamma) dW phi with
    dxi = -delta; 'gradient' is the gradient of E^2 / 2.
    """
    phi = activation(x, params)
    s = np.eye(len(x)) - (params.mu / params.gamma) * wm @ activation_jacobian(x, params)
    if rule == "newton":
        return (params.gamma / params.mu) * np.outer(s @ delta, phi) / max(phi @ phi, 1e-300)
    y = np.linalg.solve(s.T, delta)
    return (params.mu / params.gamma) * np.outer(y, phi)


def train(w0: StructuredWeights, params: NetworkParams, cfg: TrainConfig,
          callback=None) -> TrainRecord:
    """Equilibrium learning with periodic block projection.

    Per epoch: one step on W with backtracking until the perturbed system has
    a stable equilibrium near the old one, then a bold-driver learning-rate
    update. Every proj_period epochs the blocks are projected (unless ablated)
    and the stopping test |delta|_inf < tol, E < tol is evaluated.
    """
    rec = TrainRecord(seed=cfg.seed)
    n6 = 6 * w0.n_neurons
    if cfg.target.size != n6 or params.bias.size != n6:
        raise ValueError("target, bias and weights disagree on the network size")
    alpha = initial_strengths(w0, cfg)
    wm = w0.matrix()
    target = cfg.target

    def pack():
        return StructuredWeights.from_matrix(wm, alpha)

    x = track_equilibrium(wm, params, np.zeros(n6))
    if x is None:
        rec.status = "no_equilibrium"
        rec.weights = pack()
        return rec
    e = loss(x, target)
    eta = float(np.clip(cfg.lr_init, cfg.lr_min, cfg.lr_max))

    for k in range(1, cfg.max_epochs + 1):
        delta = x - target
        g = _step_direction(wm, params, x, delta, cfg.step_rule)
        while True:
            xn = track_equilibrium(wm - eta * g, params, x)
            if xn is not None:
                break
            if eta <= cfg.lr_min:
                rec.status = "unstable_step"
                rec.weights, rec.equilibrium = pack(), x
                return rec
            eta = max(eta * cfg.lr_down, cfg.lr_min)
        if cfg.learn_alpha:
            cur = pack()
            ga = grad_alpha(cur, params, x, target, g)
            ga = ga / np.maximum((cur.blocks**2).sum(axis=(2, 3)), 1e-300)
            alpha = alpha - eta * ga
            alpha = np.where(np.abs(alpha) < ALPHA_FLOOR, np.copysign(ALPHA_FLOOR, alpha), alpha)
        wm = wm - eta * g
        x = xn
        e_new = loss(x, target)
        rec.lrs.append(eta)
        eta = min(eta * cfg.lr_up, cfg.lr_max) if e_new < e else max(eta * cfg.lr_down, cfg.lr_min)
        e = e_new

        if k % cfg.proj_period == 0:
            if not cfg.ablate_projection:
                wm = project_weights(pack()).matrix()
                xp = track_equilibrium(wm, params, x)
                if xp is None:
                    rec.status = "unstable_projection"
                    rec.weights, rec.equilibrium = pack(), x
                    rec.losses.append(e)
                    rec.accuracies.append(accuracy(x, target, cfg.tol))
                    rec.max_errors.append(float(np.abs(x - target).max()))
                    return rec
                x = xp
                e = loss(x, target)
            rec.deviation_epochs.append(k)
            rec.deviations.append(block_deviation(pack()))

        rec.losses.append(e)
        rec.accuracies.append(accuracy(x, target, cfg.tol))
        rec.max_errors.append(float(np.abs(x - target).max()))
        if callback is not None:
            callback(k, rec)
        if k % cfg.proj_period == 0 and rec.accuracies[-1] == 1.0 and e < cfg.tol:
            rec.converged = True
            rec.status = "converged"
            break
    else:
        rec.status = "max_epochs"

    rec.weights, rec.equilibrium = pack(), x
    return rec
