import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gpslearn import gps as gps_module
from gpslearn.envs import EnvSpec, make_env
from gpslearn.gps import GpsConfig, final_policy_kls, policy_traj_kl, run_gps, update_duals
from gpslearn.lingauss import GaussianMarginals, TvlgController
from gpslearn.trajopt import TrajOptConfig
from oracles import random_spd

TRAJ = TrajOptConfig(initial_samples=5, n_max=5, initial_epsilon=5.0, sigma0=0.25)


def linear_problem():
    env = make_env(EnvSpec("linear-quadratic", horizon=30, control_period_s=0.1))
    return env, env.default_cost(w=10.0, v=0.0)


@pytest.fixture(scope="module")
def linear_run():
    env, cost = linear_problem()
    return run_gps([env], [cost], GpsConfig(iterations=30, traj=TRAJ), seed=0)


def test_update_duals_examples():
    np.testing.assert_array_equal(update_duals([1.0, 1.0], [0.5, 2.0], 2.0), [2.0, 5.0])
    np.testing.assert_array_equal(update_duals([0.3, 4.0], [0.0, 0.0], 5.0), [0.3, 4.0])
    with pytest.raises(ValueError):
        update_duals([1.0], [1.0, 2.0], 1.0)


@given(
    st.lists(st.floats(0, 1e3), min_size=1, max_size=10),
    st.floats(0, 1e3),
    st.floats(0, 10),
)
def test_update_duals_keep_nonnegative(lams, kl, rate):
    kls = np.full(len(lams), kl)
    out = update_duals(lams, kls, rate)
    assert np.all(out >= 0) and np.all(out >= np.asarray(lams))


def one_step_controller(K, k, C):
    return TvlgController(np.array([[[K]]]), np.array([[k]]), np.array([[[C]]]), np.zeros((1, 1)), np.zeros((1, 1)))


def test_policy_kl_degenerate_one_dimensional_example():
    marg = GaussianMarginals(np.zeros((1, 2)), np.zeros((1, 2, 2)), 1)
    policy = one_step_controller(0.0, 1.0, 1.0)
    ctrl = one_step_controller(0.0, 0.0, 1.0)
    assert policy_traj_kl(policy, ctrl, marg)[0] == pytest.approx(0.5)
    assert policy_traj_kl(ctrl, ctrl, marg)[0] == 0.0


def test_policy_kl_matches_monte_carlo():
    rng = np.random.default_rng(0)
    T, dX, dU, n = 3, 3, 2, 100_000

    def random_ctrl():
        return TvlgController(
            rng.standard_normal((T, dU, dX)),
            rng.standard_normal((T, dU)),
            np.stack([random_spd(rng, dU) for _ in range(T)]),
            rng.standard_normal((T, dX)),
            rng.standard_normal((T, dU)),
        )

    pol, ctrl = random_ctrl(), random_ctrl()
    mu = np.zeros((T, dX + dU))
    sigma = np.zeros((T, dX + dU, dX + dU))
    mu[:, :dX] = rng.standard_normal((T, dX))
    for t in range(T):
        sigma[t, :dX, :dX] = 0.5 * random_spd(rng, dX)
    exact = policy_traj_kl(pol, ctrl, GaussianMarginals(mu, sigma, dX))
    for t in range(T):
        X = rng.multivariate_normal(mu[t, :dX], sigma[t, :dX, :dX], n)
        # Closed-form Gaussian KL at each sampled state, then averaged.
        dm = X @ (pol.K[t] - ctrl.K[t]).T + (pol.offset()[t] - ctrl.offset()[t])
        P = np.linalg.inv(ctrl.C[t])
        const = np.trace(P @ pol.C[t]) - dU + np.linalg.slogdet(ctrl.C[t])[1] - np.linalg.slogdet(pol.C[t])[1]
        vals = 0.5 * (const + np.einsum("ni,ij,nj->n", dm, P, dm))
        se = vals.std() / np.sqrt(n)
        assert abs(vals.mean() - exact[t]) < 3 * se


def test_linear_benchmark_policy_matches_controller(linear_run):
    _, records, state = linear_run
    # The first 15 records are those of a 15-iteration run (runs are deterministic).
    assert records[14]["policy_kl_mean"] < 1e-2
    assert final_policy_kls(state).mean() < 1e-2


def test_trajectory_step_respects_kl_bound(linear_run):
    _, records, _ = linear_run
    for rec in records:
        assert rec["traj_kl"] <= 1.1 * rec["epsilon_after"]


def test_stationary_after_convergence(linear_run):
    _, records, _ = linear_run
    costs = np.array([r["expected_cost"] for r in records])
    converged = [i for i in range(25, len(records) - 1) if records[i]["policy_kl_max"] < 1e-2]
    assert converged
    for i in converged:
        assert abs(costs[i + 1] - costs[i]) < 0.01 * abs(costs[i])


def test_zero_rate_keeps_duals_and_record_count():
    envs = [make_env(EnvSpec("linear-quadratic", horizon=10, init_std=0.1 * i)) for i in range(4)]
    costs = [e.default_cost(w=10.0, v=0.0) for e in envs]
    cfg = GpsConfig(iterations=2, dual_rate=0.0, initial_lambda=0.5, first_epochs=5, epochs=5, traj=TRAJ)
    _, records, state = run_gps(envs, costs, cfg, seed=1)
    assert len(records) == 4 * 2
    np.testing.assert_array_equal(state.lambdas, 0.5)
    assert all(r["lambda_mean"] == 0.5 for r in records)


def test_duals_never_decrease(monkeypatch):
    calls = []
    original = gps_module.update_duals

    def spy(lams, kls, rate):
        out = original(lams, kls, rate)
        calls.append((np.array(lams), out))
        return out

    monkeypatch.setattr(gps_module, "update_duals", spy)
    env = make_env(EnvSpec("linear-quadratic", horizon=10))
    cfg = GpsConfig(iterations=3, inner_iterations=2, first_epochs=5, epochs=5, traj=TRAJ)
    run_gps([env], [env.default_cost(w=10.0, v=0.0)], cfg, seed=2)
    assert len(calls) == 3 * 2
    for before, after in calls:
        assert np.all(after >= before)


def test_records_replay_identical():
    env = make_env(EnvSpec("linear-quadratic", horizon=10))
    cfg = GpsConfig(iterations=3, first_epochs=5, epochs=5, traj=TRAJ)
    runs = [run_gps([env], [env.default_cost(w=10.0, v=0.0)], cfg, seed=3) for _ in range(2)]
    assert json.dumps(runs[0][1]) == json.dumps(runs[1][1])
    for a, b in zip(runs[0][0].params, runs[1][0].params):
        np.testing.assert_array_equal(a, b)


def test_config_validation_and_mismatched_conditions():
    with pytest.raises(ValueError):
        GpsConfig(iterations=0)
    with pytest.raises(ValueError):
        GpsConfig(inner_iterations=0)
    with pytest.raises(ValueError):
        GpsConfig(dual_rate=-1.0)
    a = make_env(EnvSpec("linear-quadratic", horizon=10))
    b = make_env(EnvSpec("linear-quadratic", horizon=12))
    with pytest.raises(ValueError):
        run_gps([a, b], [a.default_cost(), b.default_cost()], GpsConfig(iterations=1, traj=TRAJ), seed=0)

