import math

import pytest
from hypothesis import assume, given, strategies as st

from gpslearn.adaptation import (
    CostTriple,
    StepSizeState,
    adjust_sample_count,
    proposed_step_size,
    update_step_size,
)


def triple_from_quadratic(a, b, eps, c0=10.0):
    """Costs whose realized change over step size s is ``a s^2 + b s`` and prediction is linear."""
    return CostTriple(c0, c0 + b * eps, c0 + b * eps + a * eps**2)


@given(
    st.floats(1e-3, 1e3),
    st.floats(-1e3, -1e-3),
    st.floats(1e-3, 10.0),
)
def test_recovers_quadratic_minimizer(a, b, eps):
    costs = triple_from_quadratic(a, b, eps)
    # The triple is rebuilt from rounded floats, so compare against its own exact parabola.
    pred = costs.prev_cur - costs.prev_prev
    gap = costs.prev_cur - costs.cur_cur
    assume(gap < 0)
    a_eff, b_eff = -gap / eps**2, pred / eps
    assert proposed_step_size(eps, costs) == pytest.approx(-b_eff / (2 * a_eff), rel=1e-12)
    assert proposed_step_size(eps, costs) == pytest.approx(-b / (2 * a), rel=1e-6)


@given(st.floats(0.5, 5.0), st.sampled_from([1e-3, 1.0, 1e3]))
def test_scale_invariant(eps, c):
    base = CostTriple(10.0, 8.0, 9.0)
    scaled = CostTriple(10.0 * c, 8.0 * c, 9.0 * c)
    s = StepSizeState(eps)
    assert update_step_size(s, scaled).epsilon == pytest.approx(update_step_size(s, base).epsilon, rel=1e-12)


def test_reference_examples():
    # Predicted drop 2, realized drop 1: optimum at the current step.
    assert update_step_size(StepSizeState(1.0), CostTriple(10, 8, 9)).epsilon == pytest.approx(1.0)
    # Realized exactly as predicted: no curvature, grow by the cap.
    assert update_step_size(StepSizeState(1.0), CostTriple(10, 8, 8)).epsilon == pytest.approx(10.0)
    # Realized no improvement at all: halve.
    assert update_step_size(StepSizeState(2.0), CostTriple(10, 8, 10)).epsilon == pytest.approx(1.0)


def test_clamp_paths():
    s = StepSizeState(1.0, eps_min=0.05, eps_max=5.0)
    # Multiplier floor: tiny proposal clipped to 0.1 eps.
    assert update_step_size(s, CostTriple(10, 9.999, 20)).epsilon == pytest.approx(0.1)
    # Nonpositive proposal: predicted worsening with worse realization.
    assert update_step_size(s, CostTriple(10, 11, 12)).epsilon == pytest.approx(0.1)
    # Multiplier ceiling then absolute ceiling.
    assert update_step_size(StepSizeState(1.0), CostTriple(10, 8, 8.1)).epsilon == pytest.approx(10.0)
    assert update_step_size(s, CostTriple(10, 8, 8.1)).epsilon == pytest.approx(5.0)
    # Absolute floor.
    low = StepSizeState(0.06, eps_min=0.05, eps_max=5.0)
    assert update_step_size(low, CostTriple(10, 11, 12)).epsilon == pytest.approx(0.05)
    # Better than predicted (concave model) counts as unbounded.
    assert proposed_step_size(1.0, CostTriple(10, 8, 7)) == math.inf


def test_degenerate_gap_is_zero_not_nan():
    assert proposed_step_size(1.0, CostTriple(10, 10, 10)) == 0.0
    assert update_step_size(StepSizeState(1.0), CostTriple(10, 10, 10)).epsilon == pytest.approx(0.1)


@given(st.floats(1e-3, 50.0), st.floats(-100, 100), st.floats(-100, 100), st.floats(-100, 100))
def test_epsilon_stays_in_bounds(eps, a, b, c):
    s = StepSizeState(eps, eps_min=1e-3, eps_max=50.0)
    new = update_step_size(s, CostTriple(a, b, c)).epsilon
    assert 1e-3 <= new <= 50.0
    assert 0.1 * eps * (1 - 1e-12) <= new or new == 1e-3
    assert new <= 10 * eps * (1 + 1e-12) or new == 50.0


def test_invalid_inputs():
    with pytest.raises(ValueError):
        CostTriple(1.0, math.nan, 0.0)
    with pytest.raises(ValueError):
        StepSizeState(1e3)
    with pytest.raises(ValueError):
        StepSizeState(1.0, eps_min=2.0, eps_max=1.0)


# (n, analytic, mc_mean, mc_std, expected next n) with n_min=3, n_max=20
SAMPLE_TABLE = [
    # deviation above one std: grow
    (5, 10.0, 12.0, 1.0, 6),
    (5, 12.0, 10.0, 1.0, 6),
    (3, 0.0, 5.0, 4.9, 4),
    (19, 1.0, 3.0, 1.5, 20),
    (20, 1.0, 3.0, 1.5, 20),
    (10, -4.0, 4.0, 7.9, 11),
    (7, 100.0, 0.0, 0.0001, 8),
    (4, 1.0, 1.5, 0.0, 5),
    (12, 0.0, 1.0, 0.99, 13),
    (6, 3.0, -3.0, 5.0, 7),
    # deviation below half a std: shrink toward n_min
    (5, 10.0, 10.1, 1.0, 4),
    (5, 10.0, 10.0, 1.0, 4),
    (4, 0.0, 0.2, 1.0, 3),
    (3, 0.0, 0.2, 1.0, 3),
    (20, 5.0, 5.0, 2.0, 19),
    (10, -1.0, -1.4, 1.0, 9),
    (8, 2.0, 2.49, 1.0, 7),
    (15, 0.0, 0.0, 1e-6, 15 - 1),
    (6, 7.0, 7.3, 0.7, 5),
    (9, 1e3, 1e3 + 1, 3.0, 8),
    # between half and one std: unchanged
    (5, 10.0, 10.5, 1.0, 5),
    (5, 10.0, 11.0, 1.0, 5),
    (3, 0.0, 0.7, 1.0, 3),
    (20, 0.0, -0.8, 1.0, 20),
    (11, 2.0, 2.6, 1.0, 11),
    (7, -3.0, -2.0, 1.5, 7),
    (4, 0.0, 1.0, 1.2, 4),
    (16, 50.0, 53.0, 4.0, 16),
    # zero spread: any deviation grows, none holds at the floor
    (5, 1.0, 1.0, 0.0, 5),
    (3, 1.0, 1.0, 0.0, 3),
]


@pytest.mark.parametrize("n,analytic,mean,std,expected", SAMPLE_TABLE)
def test_sample_count_table(n, analytic, mean, std, expected):
    assert adjust_sample_count(n, analytic, mean, std, 3, 20) == expected


def test_sample_count_table_has_thirty_cases():
    assert len(SAMPLE_TABLE) == 30


@given(st.integers(3, 20), st.floats(-10, 10), st.floats(-10, 10), st.floats(0, 10))
def test_sample_count_stays_in_bounds(n, a, m, s):
    new = adjust_sample_count(n, a, m, s, 3, 20)
    assert 3 <= new <= 20 and abs(new - n) <= 1
