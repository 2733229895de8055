import numpy as np
import pytest
from hypothesis import given, strategies as st

from gpslearn.cost import (
    CostParams,
    Waypoint,
    clip_negative_curvature,
    eval_cost,
    lorentzian,
    lorentzian_sq_curvature,
    quadratic_expansion,
    sample_averaged_expansion,
    trajectory_costs,
)
from gpslearn.errors import DimensionError
from gpslearn.layout import StateLayout
from oracles import central_gradient, central_hessian

LAYOUT = StateLayout.mechanical(n_joints=2, n_points=2, n_actions=2)  # dX = 14
DU = 2


def random_params(rng):
    return CostParams(
        target_points=tuple(rng.standard_normal(4) * 0.1),
        w=float(rng.uniform(0.1, 2)),
        v=float(rng.uniform(0.1, 2)),
        alpha=float(10 ** rng.uniform(-5, -1)),
        torque_weight=float(rng.uniform(0, 1e-2)),
        velocity_weight=float(rng.uniform(0, 1e-1)),
        spin_rate=float(rng.uniform(-1, 1)),
        spin_weight=float(rng.uniform(0, 0.5)),
    )


def step_fn(params, t=0):
    def f(xu):
        return eval_cost(xu[: LAYOUT.dim], xu[LAYOUT.dim :], t, params, LAYOUT)

    def grad(xu):
        e = quadratic_expansion(params, xu[None, : LAYOUT.dim], xu[None, LAYOUT.dim :], LAYOUT)
        return e.lxu[0]

    return f, grad


def test_derivatives_match_finite_differences_at_100_points():
    rng = np.random.default_rng(0)
    worst_g = worst_h = 0.0
    for _ in range(100):
        params = random_params(rng)
        xu = rng.standard_normal(LAYOUT.dim + DU) * 0.3
        f, grad = step_fn(params)
        e = quadratic_expansion(params, xu[None, : LAYOUT.dim], xu[None, LAYOUT.dim :], LAYOUT)
        g_fd = central_gradient(f, xu, 1e-6)
        H_fd = central_hessian(grad, xu, 1e-6)
        worst_g = max(worst_g, np.linalg.norm(e.lxu[0] - g_fd) / max(np.linalg.norm(g_fd), 1e-8))
        worst_h = max(worst_h, np.linalg.norm(e.lxuxu[0] - H_fd) / max(np.linalg.norm(H_fd), 1e-8))
    assert worst_g < 1e-4
    assert worst_h < 1e-3


def test_lorentzian_negative_curvature_near_target():
    params = CostParams(target_points=(0.0,), w=1.0, v=1.0, alpha=1e-5)
    d = 1e-3
    g = lambda s: params.w * s + params.v * np.log(s + params.alpha)  # noqa: E731
    s, h = d**2, 1e-8
    fd = (g(s + h) - 2 * g(s) + g(s - h)) / h**2
    assert lorentzian_sq_curvature(d, params) < 0
    assert lorentzian_sq_curvature(d, params) == pytest.approx(fd, rel=1e-3)
    # And the cost itself is w d^2 + v log(d^2 + alpha).
    assert lorentzian(d, params) == pytest.approx(1e-6 + np.log(1.1e-5))


def test_expansion_hessian_has_negative_eigenvalue_near_target():
    params = CostParams(target_points=(0.0,) * 4, w=1.0, v=1.0, alpha=1e-5)
    x = np.zeros((1, LAYOUT.dim))
    x[0, LAYOUT.target_displacement] = [0.01, 0.0, 0.0, 0.0]
    e = quadratic_expansion(params, x, np.zeros((1, DU)), LAYOUT)
    assert np.linalg.eigvalsh(e.lxuxu[0]).min() < 0
    clipped = clip_negative_curvature(e)
    assert np.linalg.eigvalsh(clipped.lxuxu[0]).min() >= -1e-12
    np.testing.assert_array_equal(clipped.lxu, e.lxu)


def test_waypoints_switch_target():
    params = CostParams(
        target_points=(0.0, 0.0, 0.0, 0.0),
        waypoints=(Waypoint(0, 1, (1.0, 0.0, 0.0, 0.0)),),
        torque_weight=0.0,
        velocity_weight=0.0,
    )
    x = np.zeros((4, LAYOUT.dim))
    x[:, LAYOUT.target_displacement] = [1.0, 0.0, 0.0, 0.0]
    c = trajectory_costs(x, np.zeros((4, DU)), params, LAYOUT)
    assert c[0] == c[1] == pytest.approx(np.log(1e-5))
    assert c[2] == c[3] == pytest.approx(1.0 + np.log(1 + 1e-5))
    with pytest.raises(ValueError):
        params.check_horizon(1)
    with pytest.raises(ValueError):
        CostParams((0.0,), waypoints=(Waypoint(0, 3, (1.0,)), Waypoint(2, 4, (2.0,))))


@given(st.integers(0, 1000))
def test_sample_averaged_expansion_is_exact_mean_of_quadratics(seed):
    rng = np.random.default_rng(seed)
    params = random_params(rng)
    N, T = 4, 3
    X = rng.standard_normal((N, T, LAYOUT.dim)) * 0.2
    U = rng.standard_normal((N, T, DU)) * 0.2
    avg = sample_averaged_expansion(params, X, U, LAYOUT)
    singles = [quadratic_expansion(params, X[i], U[i], LAYOUT) for i in range(N)]
    z = np.concatenate([X[0], U[0]], axis=1) + 0.1 * rng.standard_normal((T, LAYOUT.dim + DU))
    for t in range(T):
        want = np.mean([s.evaluate(t, z[t]) for s in singles])
        assert avg.evaluate(t, z[t]) == pytest.approx(want, rel=1e-9, abs=1e-9)


def test_dimension_errors():
    params = CostParams(target_points=(0.0, 0.0))
    with pytest.raises(DimensionError):
        trajectory_costs(np.zeros((2, LAYOUT.dim)), np.zeros((2, DU)), params, LAYOUT)
    with pytest.raises(DimensionError):
        eval_cost(np.zeros(3), np.zeros(DU), 0, params, LAYOUT)
    with pytest.raises(ValueError):
        CostParams((0.0,), alpha=0.0)


def test_to_dict_round_trip():
    params = CostParams((0.1, 0.2), waypoints=(Waypoint(1, 2, (0.0, 0.0)),), spin_weight=0.5)
    again = CostParams(**params.to_dict())
    assert again == params
