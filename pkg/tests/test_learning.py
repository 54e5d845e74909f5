import numpy as np
import pytest

from lieednn.geometry import linear_rep, random_pose
from lieednn.learning import (
    SingularSensitivity,
    TrainConfig,
    accuracy,
    grad_alpha,
    grad_alpha_expanded,
    grad_weights,
    loss,
    default_setup,
    sensitivity,
    train,
)
from lieednn.network import NetworkParams, StructuredWeights, find_equilibrium, normalize, stability_check
from oracles import fd_grad_alpha, fd_grad_weights, max_rel_error, random_system, solve_equilibrium


def test_loss_examples(rng):
    x = rng.normal(size=12)
    assert loss(x, x) == 0.0
    d = np.zeros(12)
    d[:2] = [3, 4]
    assert loss(d, np.zeros(12)) == 5.0
    for _ in range(20):
        a, b = rng.normal(size=24), rng.normal(size=24)
        assert np.isclose(loss(a, b), np.sqrt(sum((a - b) ** 2)), rtol=1e-14)


def test_accuracy_definition():
    t = np.zeros(6)
    x = np.array([0, 1e-6, -2e-5, 1e-5, 0, 0])
    assert accuracy(x, t, 1e-5) == pytest.approx(4 / 6)


def test_sensitivity_examples(rng):
    params = NetworkParams.uniform(2, gamma=1.0, mu=1.0)
    x = rng.normal(size=12)
    assert np.array_equal(sensitivity(np.zeros((12, 12)), params, x), np.eye(12))
    w = rng.normal(size=(12, 12)) * 0.05
    s = sensitivity(w, params, x)
    assert np.array_equal(s, np.eye(12) - w * (1 - np.tanh(x) ** 2))
    rhs = rng.normal(size=12)
    assert np.abs(s @ np.linalg.solve(s, rhs) - rhs).max() <= 1e-10


def test_sensitivity_singular():
    params = NetworkParams.uniform(1)
    with pytest.raises(SingularSensitivity):
        sensitivity(np.eye(6), params, np.zeros(6))


def test_grad_weights_zero_error(rng):
    w, params, _ = random_system(rng, 2)
    xs = find_equilibrium(w, params)
    assert not grad_weights(w, params, xs, xs).any()


def test_grad_weights_without_coupling(rng):
    params = NetworkParams(gamma=2.0, mu=0.5, bias=rng.uniform(-1, 1, 6))
    xs = find_equilibrium(np.zeros((6, 6)), params)
    target = rng.normal(size=6)
    delta = xs - target
    e = np.linalg.norm(delta)
    expected = np.outer(delta, np.tanh(xs)) * 0.5 / (2.0 * e)
    assert np.allclose(grad_weights(np.zeros((6, 6)), params, xs, target), expected, rtol=1e-13)


@pytest.mark.parametrize("n", [1, 2])
def test_grad_weights_finite_difference(rng, n):
    for _ in range(3):
        w, params, target = random_system(rng, n, gain=None)
        xs = solve_equilibrium(w.matrix(), params, find_equilibrium(w, params))
        g = grad_weights(w, params, xs, target)
        assert max_rel_error(fd_grad_weights(w, params, target, xs), g) < 1e-4


def test_grad_weights_finite_difference_beyond_contraction(rng):
    # strengths scaled past the norm bound; equilibrium still isolated and stable
    w, params, target = random_system(rng, 2, gain=3.0)
    xs = solve_equilibrium(w.matrix(), params, np.zeros(12))
    assert not stability_check(w, params).column_ok
    g = grad_weights(w, params, xs, target)
    assert max_rel_error(fd_grad_weights(w, params, target, xs), g) < 1e-4


def test_grad_alpha_zero_error(rng):
    w, params, _ = random_system(rng, 2)
    xs = find_equilibrium(w, params)
    gw = grad_weights(w, params, xs, xs)
    assert not grad_alpha(w, params, xs, xs, gw).any()


def test_grad_alpha_two_forms_agree(rng):
    for _ in range(10):
        w, params, target = random_system(rng, 3)
        xs = find_equilibrium(w, params)
        gw = grad_weights(w, params, xs, target)
        a = grad_alpha(w, params, xs, target, gw)
        b = grad_alpha_expanded(w, gw)
        assert np.abs(a - b).max() <= 1e-12


def test_grad_alpha_finite_difference(rng):
    for n in (1, 2):
        w, params, target = random_system(rng, n)
        xs = solve_equilibrium(w.matrix(), params, find_equilibrium(w, params))
        gw = grad_weights(w, params, xs, target)
        ga = grad_alpha(w, params, xs, target, gw)
        assert max_rel_error(fd_grad_alpha(w, params, target, xs), ga) < 1e-4


def test_grad_alpha_floor(rng):
    w, params, target = random_system(rng, 2)
    alpha = w.alpha.copy()
    alpha[0, 1] = 0.0
    w0 = StructuredWeights(alpha, w.blocks)
    xs = find_equilibrium(w0, params)
    gw = grad_weights(w0, params, xs, target)
    with pytest.warns(RuntimeWarning):
        ga = grad_alpha(w0, params, xs, target, gw)
    assert ga[0, 1] == 0.0


# ---- training loop -------------------------------------------------------------------


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(np.zeros(6), lr_min=0.3, lr_max=0.2)
    with pytest.raises(ValueError):
        TrainConfig(np.zeros(6), proj_period=0)
    with pytest.raises(ValueError):
        TrainConfig(np.zeros(6), tol=0.0)
    with pytest.raises(ValueError):
        TrainConfig(np.zeros(6), step_rule="adam")


def test_train_stops_immediately_at_target(rng):
    n = 2
    blocks = np.array([[linear_rep(random_pose(rng)) for _ in range(n)] for _ in range(n)])
    params = NetworkParams.uniform(n)
    w0 = normalize(StructuredWeights(rng.uniform(-1, 1, (n, n)), blocks), params)
    target = find_equilibrium(w0, params)
    rec = train(w0, params, TrainConfig(target, proj_period=10, alpha_init="keep"))
    assert rec.converged and rec.epochs == 10
    assert rec.final_loss < 1e-5


def test_default_setup_is_reproducible():
    a = default_setup(4, 7)
    b = default_setup(4, 7)
    assert np.array_equal(a[0].matrix(), b[0].matrix())
    assert np.array_equal(a[2], b[2])
    assert np.all(np.abs(a[2]) < 0.8)
    rep = stability_check(a[0], a[1])
    assert rep.column_ok and rep.symmetric_ok


@pytest.fixture(scope="module")
def seed1_run():
    w0, params, target = default_setup(4, 1)
    return train(w0, params, TrainConfig(target, seed=1)), params, target


def test_training_converges_and_keeps_structure(seed1_run):
    rec, params, target = seed1_run
    assert rec.converged
    assert rec.final_loss < 1e-5 and rec.accuracies[-1] == 1.0
    assert rec.epochs % 10 == 0
    assert max(rec.deviations) <= 1e-8
    assert len(rec.deviation_epochs) == rec.epochs // 10
    # the stored equilibrium is a genuine equilibrium of the stored weights
    xs = solve_equilibrium(rec.weights.matrix(), params, rec.equilibrium)
    assert np.abs(xs - target).max() < 1e-5


def test_equilibria_track_target(seed1_run):
    rec = seed1_run[0]
    errs = np.array(rec.max_errors)
    assert errs[-1] < 1e-5
    windows = errs[: len(errs) // 1000 * 1000].reshape(-1, 1000).max(axis=1)
    assert np.all(np.diff(windows) < 0)


def test_training_is_deterministic():
    w0, params, target = default_setup(4, 4)
    cfg = TrainConfig(target, seed=4, max_epochs=300)
    a, b = train(w0, params, cfg), train(w0, params, cfg)
    assert a.losses == b.losses
    assert np.array_equal(a.weights.matrix(), b.weights.matrix())


@pytest.mark.parametrize("seed", range(5))
def test_loss_monotone_between_projections(seed):
    w0, params, target = default_setup(4, seed)
    cfg = TrainConfig(target, lr_min=0.002, lr_max=0.002, max_epochs=200, seed=seed)
    rec = train(w0, params, cfg)
    assert rec.status in ("max_epochs", "converged")
    for k in range(1, rec.epochs):
        if (k + 1) % cfg.proj_period != 0:
            assert rec.losses[k] <= rec.losses[k - 1] + 1e-15


def test_ablation_loses_structure():
    w0, params, target = default_setup(4, 0)
    rec = train(w0, params, TrainConfig(target, ablate_projection=True))
    assert rec.converged
    assert rec.final_deviation > 1e-2


def test_learned_strengths_run():
    w0, params, target = default_setup(4, 2)
    rec = train(w0, params, TrainConfig(target, seed=2, learn_alpha=True))
    assert rec.converged
    assert rec.final_deviation < 1e-8
    assert not np.allclose(rec.weights.alpha, rec.weights.alpha.flat[0])


def test_gradient_step_rule_decreases_loss():
    w0, params, target = default_setup(2, 3)
    cfg = TrainConfig(target, step_rule="gradient", max_epochs=50, proj_period=1000)
    rec = train(w0, params, cfg)
    assert rec.losses[-1] < rec.losses[0]


def test_failed_run_returns_partial_record():
    w0, params, target = default_setup(4, 2)
    rec = train(w0, params, TrainConfig(target, seed=2))
    assert not rec.converged
    assert rec.status in ("unstable_step", "unstable_projection", "max_epochs")
    assert rec.weights is not None and len(rec.losses) == rec.epochs
