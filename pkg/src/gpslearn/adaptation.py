"""Adaptive KL step size and adaptive sample count."""

from dataclasses import dataclass, replace
import math

EPS_MIN = 1e-4
EPS_MAX = 1e2
MULT_MIN = 0.1
MULT_MAX = 10.0
N_MIN = 3
N_MAX = 20


@dataclass(frozen=True)
class StepSizeState:
    epsilon: float
    eps_min: float = EPS_MIN
    eps_max: float = EPS_MAX
    mult_min: float = MULT_MIN
    mult_max: float = MULT_MAX

    def __post_init__(self):
        if not 0 < self.eps_min <= self.eps_max:
            raise ValueError("need 0 < eps_min <= eps_max")
        if not 0 < self.mult_min <= 1 <= self.mult_max:
            raise ValueError("need 0 < mult_min <= 1 <= mult_max")
        if not self.eps_min <= self.epsilon <= self.eps_max:
            raise ValueError(f"epsilon {self.epsilon} outside [{self.eps_min}, {self.eps_max}]")


@dataclass(frozen=True)
class CostTriple:
    """Analytic expected costs around one controller update.

    prev_prev: previous controller under the previous dynamics.
    prev_cur: current controller under the previous dynamics (the prediction).
    cur_cur: current controller under the current dynamics (the realization).
    """

    prev_prev: float
    prev_cur: float
    cur_cur: float

    def __post_init__(self):
        if not all(math.isfinite(c) for c in (self.prev_prev, self.prev_cur, self.cur_cur)):
            raise ValueError("costs must be finite")


def proposed_step_size(epsilon, costs):
    """Unclamped ``-b / 2a`` from the quadratic model of realized improvement.

    Returns ``math.inf`` when an improvement was predicted and the realized
    cost came out no worse than predicted (zero or concave curvature, so the
    surrogate has no finite minimizer), and a nonpositive number when the
    step predicted no improvement yet the cost rose.
    """
    predicted = costs.prev_cur - costs.prev_prev
    gap = costs.prev_cur - costs.cur_cur
    if predicted < 0 and gap >= 0.0:
        return math.inf
    if gap == 0.0:
        return 0.0
    return 0.5 * epsilon * predicted / gap


def update_step_size(state, costs):
    eps = state.epsilon
    new = proposed_step_size(eps, costs)
    if not new > 0 or math.isnan(new):
        new = MULT_MIN * eps
    new = min(max(new, state.mult_min * eps), state.mult_max * eps)
    new = min(max(new, state.eps_min), state.eps_max)
    return replace(state, epsilon=new)


def adjust_sample_count(n, analytic_cost, mc_mean, mc_std, n_min=N_MIN, n_max=N_MAX):
    """Grow the sample count when the model-based cost disagrees with the samples."""
    dev = abs(analytic_cost - mc_mean)
    if dev > mc_std:
        n = n + 1
    elif dev < 0.5 * mc_std and n > n_min:
        n = n - 1
    return min(max(n, n_min), n_max)
