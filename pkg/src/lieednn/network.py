"""Continuous-time dynamics of the structured network.

State xi in R^{6N} stacks one twist per neuron (neuron i owns plain indices
6i .. 6i+5). The system is

    d xi / dt = -gamma xi + mu W phi(xi) + mu b

with W assembled block-wise as W_ij = alpha_ij * L_ij.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import RK45

ACTIVATIONS = ("tanh", "equivariant")


class IntegrationError(RuntimeError):
    """Adaptive integration could not proceed; `trajectory` holds the partial run."""

    def __init__(self, message: str, trajectory: "Trajectory"):
        super().__init__(message)
        self.trajectory = trajectory


class NotAContraction(ValueError):
    pass


def assemble(alpha, blocks) -> np.ndarray:
    """Place alpha_ij * blocks[i, j] at rows 6i.., columns 6j.."""
    alpha = np.asarray(alpha, dtype=float)
    blocks = np.asarray(blocks, dtype=float)
    if alpha.ndim != 2 or alpha.shape[0] != alpha.shape[1]:
        raise ValueError(f"alpha must be square, got {alpha.shape}")
    n = alpha.shape[0]
    if blocks.shape != (n, n, 6, 6):
        raise ValueError(f"blocks must have shape {(n, n, 6, 6)}, got {blocks.shape}")
    scaled = alpha[:, :, None, None] * blocks
    return scaled.transpose(0, 2, 1, 3).reshape(6 * n, 6 * n)


def split_blocks(w) -> np.ndarray:
    """View a 6N x 6N matrix as an (N, N, 6, 6) block grid."""
    w = np.asarray(w, dtype=float)
    n = w.shape[0] // 6
    if w.shape != (6 * n, 6 * n):
        raise ValueError(f"weight matrix must be 6N x 6N, got {w.shape}")
    return w.reshape(n, 6, n, 6).transpose(0, 2, 1, 3)


def disassemble(w, alpha) -> np.ndarray:
    """Recover blocks from an assembled matrix given the strengths."""
    alpha = np.asarray(alpha, dtype=float)
    return split_blocks(w) / alpha[:, :, None, None]


@dataclass(frozen=True)
class StructuredWeights:
    """N x N grid of (alpha_ij, 6x6 block) pairs.

    Blocks are stored raw: during training they drift off the adjoint
    manifold and are only pulled back by projection.
    """

    alpha: np.ndarray
    blocks: np.ndarray

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=float)
        blocks = np.array(self.blocks, dtype=float)
        n = alpha.shape[0]
        if alpha.shape != (n, n) or blocks.shape != (n, n, 6, 6):
            raise ValueError("alpha must be N x N and blocks N x N x 6 x 6")
        if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(blocks))):
            raise ValueError("weights must be finite")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "blocks", blocks)

    @property
    def n_neurons(self) -> int:
        return self.alpha.shape[0]

    def matrix(self) -> np.ndarray:
        return assemble(self.alpha, self.blocks)

    @classmethod
    def from_matrix(cls, w, alpha) -> "StructuredWeights":
        w = np.asarray(w, dtype=float)
        n = w.shape[0] // 6
        alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (n, n))
        return cls(alpha, disassemble(w, alpha))

    @classmethod
    def zeros(cls, n: int) -> "StructuredWeights":
        return cls(np.zeros((n, n)), np.tile(np.eye(6), (n, n, 1, 1)))


@dataclass(frozen=True)
class NetworkParams:
    gamma: float = 1.0
    mu: float = 1.0
    bias: np.ndarray = field(default_factory=lambda: np.full(24, 0.125))
    activation: str = "tanh"
    eps: float = 1e-6

    def __post_init__(self):
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError("gamma must be finite and positive")
        if not (np.isfinite(self.mu) and self.mu > 0):
            raise ValueError("mu must be finite and positive")
        b = np.array(self.bias, dtype=float).reshape(-1)
        if b.size % 6 or not np.all(np.isfinite(b)):
            raise ValueError("bias must be a finite vector of length 6N")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        object.__setattr__(self, "bias", b)

    @property
    def n_neurons(self) -> int:
        return self.bias.size // 6

    @classmethod
    def uniform(cls, n: int, b: float = 0.125, **kw) -> "NetworkParams":
        return cls(bias=np.full(6 * n, b), **kw)


def _matrix(w) -> np.ndarray:
    return w.matrix() if isinstance(w, StructuredWeights) else np.asarray(w, dtype=float)


# ---- activations -----------------------------------------------------------


def equivariant_scale(omega_norm, eps: float = 1e-6):
    return np.tanh(omega_norm) / (omega_norm + eps)


def equivariant_activation(x, eps: float = 1e-6):
    """Phi(X) = tanh(|omega|) / (|omega| + eps) * X for a Twist or a 6-vector."""
    from .geometry import Twist

    if isinstance(x, Twist):
        s = equivariant_scale(np.linalg.norm(x.omega), eps)
        return Twist(s * x.omega, s * x.v)
    x = np.asarray(x, dtype=float)
    return equivariant_scale(np.linalg.norm(x[:3]), eps) * x


def activation(xi, params: NetworkParams) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if params.activation == "tanh":
        return np.tanh(xi)
    blocks = xi.reshape(-1, 6)
    r = np.linalg.norm(blocks[:, :3], axis=1)
    return (equivariant_scale(r, params.eps)[:, None] * blocks).reshape(-1)


def activation_jacobian(xi, params: NetworkParams) -> np.ndarray:
    """Jacobian of phi at xi (diagonal for tanh, 6x6 block-diagonal otherwise)."""
    xi = np.asarray(xi, dtype=float)
    if params.activation == "tanh":
        return np.diag(1.0 - np.tanh(xi) ** 2)
    n = xi.size // 6
    jac = np.zeros((xi.size, xi.size))
    eps = params.eps
    for i in range(n):
        x = xi[6 * i : 6 * i + 6]
        r = np.linalg.norm(x[:3])
        s = equivariant_scale(r, eps)
        blk = s * np.eye(6)
        if r > 0:
            ds = ((1.0 - np.tanh(r) ** 2) * (r + eps) - np.tanh(r)) / (r + eps) ** 2
            blk[:, :3] += np.outer(x, ds * x[:3] / r)
        jac[6 * i : 6 * i + 6, 6 * i : 6 * i + 6] = blk
    return jac


# ---- norms and stability -----------------------------------------------------


@dataclass(frozen=True)
class StabilityReport:
    column_ok: bool
    symmetric_ok: bool
    norm1: float
    norm_inf: float
    column_margin: float
    symmetric_margin: float
    bound: float = 1.0

    @property
    def norms_ok(self) -> bool:
        return self.norm1 < self.bound and self.norm_inf < self.bound


def stability_check(w, params: NetworkParams) -> StabilityReport:
    """Sufficient conditions for a unique stable equilibrium (Lipschitz constant 1).

    Column condition: sum_i |w_ij| < gamma/mu for every j.
    Symmetrized condition: sum_i (|w_ji| + |w_ij|) < 2 gamma/mu for every i.
    """
    a = np.abs(_matrix(w))
    bound = params.gamma / params.mu
    col = a.sum(axis=0)
    row = a.sum(axis=1)
    m_col = bound - col.max()
    m_sym = 2.0 * bound - (row + col).max()
    return StabilityReport(
        column_ok=bool(m_col > 0),
        symmetric_ok=bool(m_sym > 0),
        norm1=float(col.max()),
        norm_inf=float(row.max()),
        column_margin=float(m_col),
        symmetric_margin=float(m_sym),
        bound=float(bound),
    )


def normalize(w: StructuredWeights, params: NetworkParams, eps: float = 1e-12) -> StructuredWeights:
    """Uniformly rescale the strengths so both induced norms fall below gamma/mu."""
    m = w.matrix()
    big = max(np.abs(m).sum(axis=0).max(), np.abs(m).sum(axis=1).max())
    s = (params.gamma / params.mu) / (eps + big * (1.0 + 1e-6))
    return StructuredWeights(w.alpha * s, w.blocks)


# ---- dynamics ----------------------------------------------------------------


def vector_field(xi, w, params: NetworkParams) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    wm = _matrix(w)
    return -params.gamma * xi + params.mu * (wm @ activation(xi, params)) + params.mu * params.bias


def field_jacobian(xi, w, params: NetworkParams) -> np.ndarray:
    wm = _matrix(w)
    return -params.gamma * np.eye(len(xi)) + params.mu * wm @ activation_jacobian(xi, params)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    converged: bool
    equilibrium: np.ndarray | None = None
    status: str = "t_end"

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)

    def __len__(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class Tolerances:
    rtol: float = 1e-7
    atol: float = 1e-9
    first_step: float = 1e-3
    max_step: float = 0.5
    eq_tol: float = 1e-9
    eq_hold: int = 3


def integrate(
    xi0,
    w,
    params: NetworkParams,
    t_end: float = 50.0,
    tol: Tolerances = Tolerances(),
    stop_at_equilibrium: bool = True,
    t_eval=None,
) -> Trajectory:
    """Dormand-Prince 5(4) integration recording every accepted step.

    Equilibrium is declared once |F|_inf < eq_tol on `eq_hold` consecutive
    accepted steps. With `t_eval`, states are sampled from the dense output
    at those times instead and integration runs to t_end.
    """
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    wm = _matrix(w)
    xi0 = np.asarray(xi0, dtype=float).copy()

    def f(_t, y):
        return vector_field(y, wm, params)

    solver = RK45(
        f, 0.0, xi0, t_end, rtol=tol.rtol, atol=tol.atol,
        first_step=tol.first_step, max_step=tol.max_step,
    )
    if t_eval is not None:
        t_eval = np.asarray(t_eval, dtype=float)
        stop_at_equilibrium = False
    times, states = [0.0], [xi0]
    sampled = []
    k_eval = 0
    if t_eval is not None:
        while k_eval < len(t_eval) and t_eval[k_eval] <= 0.0:
            sampled.append(xi0)
            k_eval += 1
    hold = 1 if np.abs(f(0.0, xi0)).max() < tol.eq_tol else 0
    status = "t_end"
    while solver.status == "running":
        t_prev = solver.t
        msg = solver.step()
        if solver.status == "failed":
            traj = Trajectory(times, states, False, None, "failed")
            raise IntegrationError(msg or "integration failed", traj)
        y = solver.y.copy()
        if not np.all(np.isfinite(y)):
            traj = Trajectory(times, states, False, None, "nonfinite")
            raise IntegrationError("state became non-finite", traj)
        if t_eval is not None:
            dense = solver.dense_output()
            while k_eval < len(t_eval) and t_eval[k_eval] <= solver.t:
                if t_eval[k_eval] >= t_prev:
                    sampled.append(dense(t_eval[k_eval]))
                k_eval += 1
        times.append(solver.t)
        states.append(y)
        hold = hold + 1 if np.abs(f(solver.t, y)).max() < tol.eq_tol else 0
        if hold >= tol.eq_hold and stop_at_equilibrium:
            status = "equilibrium"
            break
    converged = hold >= tol.eq_hold
    if converged:
        status = "equilibrium"
    if t_eval is not None:
        return Trajectory(t_eval[: len(sampled)], np.array(sampled), converged,
                          states[-1] if converged else None, status)
    return Trajectory(np.array(times), np.array(states), converged,
                      states[-1] if converged else None, status)


def find_equilibrium(w, params: NetworkParams, tol: float = 1e-12, max_iter: int = 200_000,
                     xi0=None) -> np.ndarray:
    """Fixed point of T(xi) = (mu/gamma)(W phi(xi) + b).

    Requires the column-sum condition, under which T contracts in the 1-norm.
    """
    wm = _matrix(w)
    rep = stability_check(wm, params)
    if not rep.column_ok:
        raise NotAContraction(
            f"column-sum norm {rep.norm1:.6g} >= gamma/mu; fixed-point iteration not guaranteed"
        )
    c = params.mu / params.gamma
    x = c * params.bias if xi0 is None else np.asarray(xi0, dtype=float).copy()
    for _ in range(max_iter):
        xn = c * (wm @ activation(x, params) + params.bias)
        if np.abs(xn - x).max() < tol:
            return xn
        x = xn
    raise RuntimeError(f"fixed-point iteration did not reach {tol:g} in {max_iter} steps")


def equilibrium_residual(xi, w, params: NetworkParams) -> float:
    return float(np.abs(vector_field(xi, w, params)).max())


def is_stable_equilibrium(xi, w, params: NetworkParams) -> bool:
    return bool(np.linalg.eigvals(field_jacobian(xi, w, params)).real.max() < 0)


def newton_equilibrium(wm, params: NetworkParams, x0, tol: float = 1e-13, max_iter: int = 30):
    """Newton iteration on F(xi) = 0; returns None on failure or instability."""
    x = np.asarray(x0, dtype=float).copy()
    for _ in range(max_iter):
        fx = vector_field(x, wm, params)
        if not np.all(np.isfinite(fx)):
            return None
        if np.abs(fx).max() < tol:
            break
        jac = field_jacobian(x, wm, params)
        try:
            x = x - np.linalg.solve(jac, fx)
        except np.linalg.LinAlgError:
            return None
    else:
        return None
    return x if is_stable_equilibrium(x, wm, params) else None


def track_equilibrium(w, params: NetworkParams, x0, max_jump: float = 0.5,
                      horizons=(50.0, 500.0)):
    """Stable equilibrium reached from a warm start, or None.

    Newton is tried first and accepted when it lands on a stable point close
    to the warm start. Otherwise the dynamics are integrated and Newton
    polishes the terminal state.
    """
    wm = _matrix(w)
    x0 = np.asarray(x0, dtype=float)
    y = newton_equilibrium(wm, params, x0)
    if y is not None and np.abs(y - x0).max() < max_jump:
        return y
    x = x0
    for t_end in horizons:
        try:
            traj = integrate(x, wm, params, t_end=t_end)
        except IntegrationError:
            return None
        x = traj.states[-1]
        y = newton_equilibrium(wm, params, x)
        if y is not None:
            return y
    return None


def lyapunov(traj: Trajectory, xi_star, gamma: float) -> np.ndarray:
    """V(t) = (1 / 2 gamma) |xi(t) - xi*|^2 along a trajectory."""
    e = traj.states - np.asarray(xi_star, dtype=float)
    return 0.5 / gamma * np.sum(e * e, axis=1)


# ---- curvature ----------------------------------------------------------------


@dataclass(frozen=True)
class CurvatureReport:
    max_accel_fd: float
    max_accel_exact: float
    max_curvature: float
    accel_bound: float
    curvature_bound: float
    r_xi: float

    @property
    def accel_ok(self) -> bool:
        return self.max_accel_fd <= self.accel_bound and self.max_accel_exact <= self.accel_bound

    @property
    def curvature_ok(self) -> bool:
        return self.max_curvature < self.curvature_bound

    @property
    def curvature_le_accel(self) -> bool:
        return self.max_curvature <= self.max_accel_exact + 1e-15


def second_differences(t, y) -> np.ndarray:
    """Three-point second derivative on a non-uniform grid (interior samples)."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    h0 = (t[1:-1] - t[:-2])[:, None]
    h1 = (t[2:] - t[1:-1])[:, None]
    return 2.0 * (h0 * y[2:] - (h0 + h1) * y[1:-1] + h1 * y[:-2]) / (h0 * h1 * (h0 + h1))


def curvature_diagnostic(traj: Trajectory, w, params: NetworkParams) -> CurvatureReport:
    """Compare trajectory acceleration and curvature against analytic bounds.

    accel bound: (gamma + mu|W|_inf)(gamma R + mu|W|_inf + mu|b|_inf)
    curvature bound: 2 gamma (gamma R + gamma + mu b_max), with R = max |xi|_inf.
    """
    if len(traj) < 3:
        raise ValueError("curvature diagnostic needs at least 3 samples")
    wm = _matrix(w)
    g, mu = params.gamma, params.mu
    w_inf = float(np.abs(wm).sum(axis=1).max())
    b_inf = float(np.abs(params.bias).max())
    r_xi = float(np.abs(traj.states).max())
    acc_fd = second_differences(traj.times, traj.states)
    vel = np.array([vector_field(x, wm, params) for x in traj.states])
    acc = np.array([field_jacobian(x, wm, params) @ v for x, v in zip(traj.states, vel)])
    kappa = np.abs(acc) / (1.0 + vel**2) ** 1.5
    return CurvatureReport(
        max_accel_fd=float(np.abs(acc_fd).max()),
        max_accel_exact=float(np.abs(acc).max()),
        max_curvature=float(kappa.max()),
        accel_bound=(g + mu * w_inf) * (g * r_xi + mu * w_inf + mu * b_inf),
        curvature_bound=2.0 * g * (g * r_xi + g + mu * b_inf),
        r_xi=r_xi,
    )
