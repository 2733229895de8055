import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gpslearn.errors import DimensionError, TrainingDivergence
from gpslearn.lingauss import GaussianMarginals, TvlgController
from gpslearn.policy import (
    PolicyActor,
    PolicyNetwork,
    PolicyTrainingSet,
    TrainSchedule,
    controller_targets,
    forward,
    harmonic_covariance,
    jacobian,
    linearize_policy,
    loss_and_grad,
    synthesize_samples,
    train_policy,
    weighted_loss,
)
from oracles import central_gradient, random_spd


def random_set(rng, n, dX, dU):
    P = np.stack([random_spd(rng, dU) for _ in range(n)])
    lam = rng.uniform(0.5, 2.0, n)
    return PolicyTrainingSet(
        rng.standard_normal((n, dX)),
        rng.standard_normal((n, dU)),
        P * lam[:, None, None],
        lam,
        np.zeros(n, dtype=int),
        np.zeros(n, dtype=int),
        np.zeros(n, dtype=bool),
    )


@given(st.integers(0, 10_000))
def test_backprop_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    net = PolicyNetwork.create(4, 2, seed=seed, hidden=(6, 5))
    net = net.with_normalization(rng.standard_normal((20, 4)))
    data = random_set(rng, 7, 4, 2)
    _, grads = loss_and_grad(net, data)
    params = net.params
    for i, (p, g) in enumerate(zip(params, grads)):

        def f(v, i=i):
            ps = list(params)
            ps[i] = v
            return weighted_loss(net.with_params(ps), data)

        fd = central_gradient(f, p, 1e-6)
        assert np.linalg.norm(g - fd) <= 1e-4 * max(np.linalg.norm(fd), 1e-3)


@given(st.integers(0, 10_000))
def test_jacobian_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    net = PolicyNetwork.create(3, 2, seed=seed, hidden=(8, 8))
    x = rng.standard_normal(3)
    J = jacobian(net, x)
    fd = np.stack([central_gradient(lambda z, j=j: forward(net, z)[j], x) for j in range(2)])
    np.testing.assert_allclose(J, fd, rtol=1e-6, atol=1e-8)


def test_single_point_is_interpolated():
    rng = np.random.default_rng(0)
    data = random_set(rng, 1, 3, 2)
    net = PolicyNetwork.create(3, 2, seed=0, hidden=(20, 20))
    net, trace = train_policy(net, data, TrainSchedule(epochs=3000, learning_rate=1e-2))
    assert trace[-1] < 1e-6


def test_linear_targets_match_least_squares():
    rng = np.random.default_rng(1)
    n, dX, dU = 400, 3, 2
    X = rng.standard_normal((n, dX))
    A = rng.standard_normal((dU, dX))
    Y = X @ A.T + 0.05 * rng.standard_normal((n, dU))
    data = PolicyTrainingSet(
        X, Y, np.tile(np.eye(dU), (n, 1, 1)), np.ones(n), np.zeros(n, int), np.zeros(n, int), np.zeros(n, bool)
    )
    coef, *_ = np.linalg.lstsq(np.c_[X, np.ones(n)], Y, rcond=None)
    best = np.mean(np.sum((np.c_[X, np.ones(n)] @ coef - Y) ** 2, axis=1))
    net, _ = train_policy(PolicyNetwork.create(dX, dU, seed=0), data, TrainSchedule(epochs=1000, learning_rate=3e-3))
    err = np.mean(np.sum((forward(net, X) - Y) ** 2, axis=1))
    assert err <= best + 1e-3


def test_doubling_weights_doubles_loss_and_keeps_trajectory():
    rng = np.random.default_rng(2)
    data = random_set(rng, 60, 3, 2)
    doubled = PolicyTrainingSet(
        data.states, data.actions, 2 * data.precision, 2 * data.lam, data.time, data.traj, data.synthetic
    )
    net = PolicyNetwork.create(3, 2, seed=0, hidden=(10, 10))
    assert weighted_loss(net, doubled) == pytest.approx(2 * weighted_loss(net, data))
    sched = TrainSchedule(epochs=30, seed=5)
    a, ta = train_policy(net, data, sched)
    b, tb = train_policy(net, doubled, sched)
    np.testing.assert_allclose(2 * ta, tb, rtol=1e-4)
    for pa, pb in zip(a.params, b.params):
        np.testing.assert_allclose(pa, pb, rtol=1e-4, atol=1e-6)
    np.testing.assert_allclose(a.cov, b.cov)


def test_harmonic_covariance_is_weighted_precision_average():
    rng = np.random.default_rng(3)
    data = random_set(rng, 5, 2, 2)
    want = np.linalg.inv(data.precision.sum(axis=0) / data.lam.sum())
    np.testing.assert_allclose(harmonic_covariance(data), want)
    # Identical controller covariances give that covariance back.
    C = random_spd(rng, 2)
    same = PolicyTrainingSet(
        data.states, data.actions, np.tile(np.linalg.inv(C), (5, 1, 1)) * data.lam[:, None, None],
        data.lam, data.time, data.traj, data.synthetic,
    )  # fmt: skip
    np.testing.assert_allclose(harmonic_covariance(same), C)


def test_synthetic_sample_moments_within_three_standard_errors():
    rng = np.random.default_rng(4)
    T, dX, dU, per = 3, 4, 2, 10_000
    mu = np.zeros((T, dX + dU))
    sigma = np.zeros((T, dX + dU, dX + dU))
    for t in range(T):
        mu[t, :dX] = rng.standard_normal(dX)
        sigma[t, :dX, :dX] = random_spd(rng, dX)
    marg = GaussianMarginals(mu, sigma, dX)
    ctrl = TvlgController.initial(T, dX, dU)
    s = synthesize_samples(marg, ctrl, per, seed=0)
    X = s.states.reshape(T, per, dX)
    for t in range(T):
        se = np.sqrt(np.diag(sigma[t, :dX, :dX]) / per)
        assert np.all(np.abs(X[t].mean(axis=0) - mu[t, :dX]) < 3 * se)
        var = np.diag(sigma[t, :dX, :dX])
        assert np.all(np.abs(X[t].var(axis=0) - var) < 3 * var * np.sqrt(2 / per))


def test_controller_targets_and_linearization():
    rng = np.random.default_rng(5)
    T, dX, dU = 4, 3, 2
    ctrl = TvlgController(
        rng.standard_normal((T, dU, dX)),
        rng.standard_normal((T, dU)),
        np.tile(np.eye(dU), (T, 1, 1)),
        rng.standard_normal((T, dX)),
        rng.standard_normal((T, dU)),
    )
    X = rng.standard_normal((T, dX))
    d = controller_targets(ctrl, X, np.arange(T), traj=2, lam=0.5)
    for t in range(T):
        np.testing.assert_allclose(d.actions[t], ctrl.mean_action(t, X[t]))
    np.testing.assert_allclose(d.precision, 0.5 * ctrl.inv_C)
    net = PolicyNetwork.create(dX, dU, seed=1, hidden=(5, 5))
    marg = GaussianMarginals(np.c_[X, np.zeros((T, dU))], np.tile(np.eye(dX + dU), (T, 1, 1)), dX)
    lin = linearize_policy(net, marg)
    for t in range(T):
        np.testing.assert_allclose(lin.mean_action(t, X[t]), forward(net, X[t]), atol=1e-12)


def test_divergence_aborts():
    rng = np.random.default_rng(6)
    data = random_set(rng, 50, 3, 2)
    net = PolicyNetwork.create(3, 2, seed=0)
    with pytest.raises(TrainingDivergence):
        train_policy(net, data, TrainSchedule(epochs=20, learning_rate=1e6))


def test_serialization_round_trip_and_actor():
    net = PolicyNetwork.create(3, 2, seed=0).with_normalization(np.random.default_rng(0).standard_normal((10, 3)))
    again = PolicyNetwork.from_dict(json.loads(json.dumps(net.to_dict())))
    x = np.ones(3)
    np.testing.assert_array_equal(forward(again, x), forward(net, x))
    actor = PolicyActor(again, stochastic=False)
    np.testing.assert_array_equal(actor.act(0, x, None), forward(net, x))
    with pytest.raises(DimensionError):
        forward(net, np.ones(4))
    with pytest.raises(ValueError):
        PolicyNetwork.from_dict({**net.to_dict(), "schema_version": 99})
