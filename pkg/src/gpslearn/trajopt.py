"""Trajectory-centric learning of one linear-Gaussian controller per condition.

Each iteration samples the current controller, refits local dynamics, adapts
the KL step size and sample count, and solves the KL-constrained LQG update.
The same step is reused by the guided policy search loop with an extra
policy-agreement term.
"""

from dataclasses import dataclass, field

import numpy as np

from .adaptation import (
    EPS_MAX,
    EPS_MIN,
    N_MAX,
    N_MIN,
    CostTriple,
    StepSizeState,
    adjust_sample_count,
    update_step_size,
)
from .cost import clip_negative_curvature, sample_averaged_expansion
from .dynamics import DynamicsFitConfig, TransitionHistory, fit_dynamics
from .envs import ControllerActor, rollout
from .errors import GpsError
from .lingauss import TvlgController, dgd_solve, expected_cost, forward_marginals


@dataclass(frozen=True)
class TrajOptConfig:
    iterations: int = 15
    initial_samples: int = 5
    n_min: int = N_MIN
    n_max: int = N_MAX
    adaptive_samples: bool = True
    adaptive_step: bool = True
    initial_epsilon: float = 1.0
    eps_min: float = EPS_MIN
    eps_max: float = EPS_MAX
    sigma0: float = 1.0
    curvature: str = "clipped"
    dynamics: DynamicsFitConfig = field(default_factory=DynamicsFitConfig)

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if not 1 <= self.n_min <= self.n_max:
            raise ValueError("sample bounds must satisfy 1 <= n_min <= n_max")
        if not self.n_min <= self.initial_samples <= self.n_max:
            raise ValueError("initial_samples must lie within [n_min, n_max]")
        if not self.eps_min <= self.initial_epsilon <= self.eps_max:
            raise ValueError("initial_epsilon must lie within [eps_min, eps_max]")
        if self.curvature not in ("exact", "clipped"):
            raise ValueError("curvature must be 'exact' or 'clipped'")
        if not self.sigma0 > 0:
            raise ValueError("sigma0 must be positive")


@dataclass
class ConditionState:
    """Mutable per-condition learner state; owned by a single loop."""

    index: int
    env: object
    cost: object
    controller: TvlgController
    step: StepSizeState
    n_samples: int
    history: TransitionHistory
    master_seed: int
    eta: float = 1.0
    pred_prev: float | None = None  # expected cost of the previous controller, previous fit
    pred_next: float | None = None  # expected cost of the current controller, previous fit
    dynamics: object = None
    init: object = None
    marginals: object = None
    expansion: object = None
    sampling_controller: TvlgController | None = None  # controller that produced the latest samples
    samples: list = field(default_factory=list)
    total_samples: int = 0


def new_condition(index, env, cost, config, master_seed):
    cost.check_horizon(env.T)
    ctrl = TvlgController.initial(env.T, env.dX, env.dU, config.sigma0)
    return ConditionState(
        index=index,
        env=env,
        cost=cost,
        controller=ctrl,
        step=StepSizeState(config.initial_epsilon, config.eps_min, config.eps_max),
        n_samples=config.initial_samples,
        history=TransitionHistory(config.dynamics.window),
        master_seed=int(master_seed),
    )


def rollout_seed(state, iteration, j, stream=0):
    """Seed of rollout ``j`` at ``iteration``: a pure function of the master seed and indices."""
    ss = np.random.SeedSequence([state.master_seed, state.index, iteration, j, stream])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def draw_perturbation(env, seed):
    std = env.spec.perturbation_std
    if std == 0:
        return 0.0
    return float(std * np.random.default_rng(seed).standard_normal())


def collect_samples(state, iteration):
    env = state.env
    actor = ControllerActor(state.controller)
    samples = []
    for j in range(state.n_samples):
        pert = draw_perturbation(env, rollout_seed(state, iteration, j, stream=1))
        samples.append(rollout(env, actor, rollout_seed(state, iteration, j), pert, state.cost))
    state.samples = samples
    state.total_samples += len(samples)
    return samples


def trajectory_step(state, iteration, config, policy=None, policy_weights=None):
    """One sample / refit / update round for ``state``; returns the log record."""
    env = state.env
    samples = collect_samples(state, iteration)
    X = np.stack([s.states for s in samples])
    U = np.stack([s.actions for s in samples])
    state.history.add(X, U)
    fit_seed = rollout_seed(state, iteration, 0, stream=2)
    try:
        dyn, init, _ = fit_dynamics(state.history, env.dX, env.dU, config.dynamics, fit_seed)
        expansion = sample_averaged_expansion(state.cost, X, U, env.layout)
        if config.curvature == "clipped":
            expansion = clip_negative_curvature(expansion)
        marg = forward_marginals(dyn, state.controller, init)
        cur = expected_cost(marg, expansion)
    except GpsError as err:
        raise GpsError(f"condition {state.index}, iteration {iteration}: {err}") from err

    totals = np.array([s.total_cost for s in samples])
    mc_mean = float(totals.mean())
    mc_std = float(totals.std(ddof=1)) if len(totals) > 1 else 0.0
    eps_before = state.step.epsilon
    n_used = state.n_samples
    if state.pred_prev is not None:
        if config.adaptive_step:
            state.step = update_step_size(state.step, CostTriple(state.pred_prev, state.pred_next, cur))
        if config.adaptive_samples:
            state.n_samples = adjust_sample_count(
                state.n_samples, cur, mc_mean, mc_std, config.n_min, config.n_max
            )

    state.sampling_controller = state.controller
    state.dynamics, state.init, state.expansion = dyn, init, expansion
    state.pred_prev = cur
    res = _solve(state, policy, policy_weights, f"condition {state.index}, iteration {iteration}")

    return {
        "iteration": iteration,
        "condition": state.index,
        "samples": n_used,
        "cumulative_samples": state.total_samples,
        "mc_cost_mean": mc_mean,
        "mc_cost_std": mc_std,
        "expected_cost": cur,
        "epsilon_before": eps_before,
        "epsilon_after": state.step.epsilon,
        "traj_kl": res.kl,
        "eta": res.eta,
        "dgd_iterations": res.iterations,
        "mean_distance": float(np.mean([s.terminal_distance for s in samples])),
    }


def _solve(state, policy, policy_weights, where):
    try:
        res = dgd_solve(
            state.dynamics,
            state.expansion,
            state.sampling_controller,
            state.init,
            state.step.epsilon,
            eta0=state.eta,
            policy=policy,
            policy_weights=policy_weights,
        )
    except GpsError as err:
        raise GpsError(f"{where}: {err}") from err
    new_marg = forward_marginals(state.dynamics, res.controller, state.init)
    state.pred_next = expected_cost(new_marg, state.expansion)
    state.controller = res.controller
    state.eta = res.eta
    state.marginals = new_marg
    return res


def resolve_update(state, policy, policy_weights, where=""):
    """Redo the latest controller update with new policy terms, reusing its samples and fit.

    The KL step is still measured from the controller that generated the samples.
    """
    if state.expansion is None:
        raise ValueError("no previous update to redo")
    return _solve(state, policy, policy_weights, where or f"condition {state.index}")


def train_controllers(envs, costs, config, seed, on_record=None):
    """Trajectory-only learning for each condition; returns (states, records)."""
    states = [new_condition(i, env, cost, config, seed) for i, (env, cost) in enumerate(zip(envs, costs))]
    records = []
    for it in range(config.iterations):
        for st in states:
            rec = trajectory_step(st, it, config)
            records.append(rec)
            if on_record is not None:
                on_record(rec)
    return states, records


def final_distance(state, n, seed, stochastic=False, perturbation=0.0):
    """Mean terminal distance of ``n`` rollouts of the current controller."""
    actor = ControllerActor(state.controller, stochastic=stochastic)
    env = state.env
    return float(
        np.mean([rollout(env, actor, seed + j, perturbation, state.cost).terminal_distance for j in range(n)])
    )


__all__ = [
    "TrajOptConfig",
    "ConditionState",
    "new_condition",
    "trajectory_step",
    "resolve_update",
    "train_controllers",
    "final_distance",
]
