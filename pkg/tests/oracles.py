"""Independent reference computations shared by the test modules."""

import numpy as np

from lieednn.geometry import linear_rep, random_pose
from lieednn.learning import loss
from lieednn.network import NetworkParams, StructuredWeights, assemble, normalize, vector_field


def solve_equilibrium(wm, params, x0, iters=60):
    """Plain Newton with a few extra polishing iterations."""
    x = np.array(x0, dtype=float)
    n = x.size
    for _ in range(iters):
        f = vector_field(x, wm, params)
        jac = -params.gamma * np.eye(n) + params.mu * wm * (1 - np.tanh(x) ** 2)
        step = np.linalg.solve(jac, f)
        x = x - step
        if np.abs(step).max() < 1e-17:
            break
    return x


def random_system(rng, n, gain=None):
    """Random on-manifold blocks, normalized strengths, random bias and target."""
    blocks = np.array([[linear_rep(random_pose(rng)) for _ in range(n)] for _ in range(n)])
    params = NetworkParams(gamma=rng.uniform(0.5, 2), mu=rng.uniform(0.5, 2),
                           bias=rng.uniform(-0.3, 0.3, 6 * n))
    w = normalize(StructuredWeights(rng.uniform(-1, 1, (n, n)), blocks), params)
    if gain is not None:
        w = StructuredWeights(w.alpha * gain, w.blocks)
    target = rng.uniform(-0.5, 0.5, 6 * n)
    return w, params, target


def fd_grad_weights(w, params, target, x_star, h=1e-6):
    wm = w.matrix()
    n = wm.shape[0]
    g = np.zeros_like(wm)
    for i in range(n):
        for j in range(n):
            wp, wn = wm.copy(), wm.copy()
            wp[i, j] += h
            wn[i, j] -= h
            ep = loss(solve_equilibrium(wp, params, x_star), target)
            en = loss(solve_equilibrium(wn, params, x_star), target)
            g[i, j] = (ep - en) / (2 * h)
    return g


def fd_grad_alpha(w, params, target, x_star, h=1e-6):
    n = w.n_neurons
    g = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            ap, an = w.alpha.copy(), w.alpha.copy()
            ap[i, j] += h
            an[i, j] -= h
            ep = loss(solve_equilibrium(assemble(ap, w.blocks), params, x_star), target)
            en = loss(solve_equilibrium(assemble(an, w.blocks), params, x_star), target)
            g[i, j] = (ep - en) / (2 * h)
    return g


def max_rel_error(approx, exact, floor=1e-8):
    mask = np.abs(exact) > floor
    return float((np.abs(approx - exact)[mask] / np.abs(exact)[mask]).max())
