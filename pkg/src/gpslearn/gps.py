"""Guided policy search: per-condition controllers distilled into one network policy.

Each outer iteration samples every condition's controller and refits its
dynamics. Then, ``inner_iterations`` times: each controller is updated under
the KL step constraint with an extra pull toward the linearized policy, the
policy is trained on real and synthetic samples, and the per-step dual
variables rise by the remaining policy/controller disagreement.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import GpsError
from .lingauss import expected_action_kl
from .policy import (
    HIDDEN,
    SYNTHETIC_PER_STEP,
    PolicyNetwork,
    PolicyTrainingSet,
    TrainSchedule,
    controller_targets,
    linearize_policy,
    synthesize_samples,
    train_policy,
)
from .trajopt import TrajOptConfig, new_condition, resolve_update, rollout_seed, trajectory_step


@dataclass(frozen=True)
class GpsConfig:
    iterations: int = 15
    dual_rate: float = 1.0
    initial_lambda: float = 0.01
    inner_iterations: int = 1
    synthetic_per_step: int = SYNTHETIC_PER_STEP
    hidden: tuple = HIDDEN
    first_epochs: int = 100
    epochs: int = 20
    batch_size: int = 50
    learning_rate: float = 1e-3
    traj: TrajOptConfig = field(default_factory=TrajOptConfig)

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if not self.dual_rate >= 0:
            raise ValueError("dual rate must be nonnegative")
        if not self.initial_lambda >= 0:
            raise ValueError("initial dual values must be nonnegative")
        if self.inner_iterations < 1:
            raise ValueError("inner_iterations must be at least 1")


def policy_traj_kl(lin_policy, ctrl, marg):
    """Per-step ``E_x[KL(policy(u|x) || controller(u|x))]`` under the state marginals."""
    return expected_action_kl(lin_policy, ctrl, marg.state_mean, marg.state_cov)


def update_duals(lambdas, kls, rate):
    lambdas = np.asarray(lambdas, dtype=float)
    kls = np.asarray(kls, dtype=float)
    if lambdas.shape != kls.shape:
        raise ValueError("dual variables and KLs must have equal length")
    return lambdas + rate * kls


@dataclass
class GpsState:
    conditions: list
    policy: PolicyNetwork
    lambdas: np.ndarray  # (I, T)
    trained: bool = False
    records: list = field(default_factory=list)


def _training_set(gps, config, iteration, master_seed):
    parts = []
    for st in gps.conditions:
        ctrl, i = st.controller, st.index
        lam = gps.lambdas[i]
        X = np.stack([s.states for s in st.samples])
        N, T, dX = X.shape
        time = np.tile(np.arange(T), N)
        parts.append(controller_targets(ctrl, X.reshape(N * T, dX), time, i, lam[time]))
        if config.synthetic_per_step > 0:
            seed = rollout_seed(st, iteration, 0, stream=3)
            parts.append(synthesize_samples(st.marginals, ctrl, config.synthetic_per_step, seed, i, lam))
    return PolicyTrainingSet.concat(parts)


def run_gps(envs, costs, config, seed, on_record=None):
    """Run the alternating optimization; returns (policy, records, state)."""
    tcfg = config.traj
    conds = [new_condition(i, env, cost, tcfg, seed) for i, (env, cost) in enumerate(zip(envs, costs))]
    env0 = envs[0]
    if any((e.dX, e.dU, e.T) != (env0.dX, env0.dU, env0.T) for e in envs):
        raise ValueError("all conditions must share state, action, and horizon dimensions")
    net = PolicyNetwork.create(env0.dX, env0.dU, seed=seed, hidden=config.hidden)
    gps = GpsState(conds, net, np.full((len(envs), env0.T), float(config.initial_lambda)))

    for it in range(config.iterations):
        traj_recs = []
        for st in conds:
            lin = None
            if gps.trained:
                lin = linearize_policy(gps.policy, st.marginals)
            try:
                rec = trajectory_step(st, it, tcfg, policy=lin, policy_weights=gps.lambdas[st.index])
            except GpsError as err:
                raise GpsError(f"trajectory update failed: {err}") from err
            traj_recs.append(rec)

        for inner in range(config.inner_iterations):
            if inner > 0:
                # Redo the controller updates against the retrained policy and raised duals.
                for st, rec in zip(conds, traj_recs):
                    lin = linearize_policy(gps.policy, st.marginals)
                    where = f"condition {st.index}, iteration {it}, inner {inner}"
                    res = resolve_update(st, lin, gps.lambdas[st.index], where)
                    rec.update(traj_kl=res.kl, eta=res.eta, dgd_iterations=rec["dgd_iterations"] + res.iterations)
            data = _training_set(gps, config, it, seed)
            epochs = config.first_epochs if not gps.trained else config.epochs
            schedule = TrainSchedule(
                epochs=epochs,
                batch_size=config.batch_size,
                learning_rate=config.learning_rate,
                seed=int(np.random.SeedSequence([seed, it, inner]).generate_state(1)[0]),
            )
            gps.policy, trace = train_policy(gps.policy, data, schedule)
            gps.trained = True
            for st, rec in zip(conds, traj_recs):
                lin = linearize_policy(gps.policy, st.marginals)
                kl = policy_traj_kl(lin, st.controller, st.marginals)
                gps.lambdas[st.index] = update_duals(gps.lambdas[st.index], kl, config.dual_rate)
                rec.update(
                    policy_loss=float(trace[-1]),
                    policy_kl_mean=float(kl.mean()),
                    policy_kl_max=float(kl.max()),
                    lambda_mean=float(gps.lambdas[st.index].mean()),
                )

        for rec in traj_recs:
            gps.records.append(rec)
            if on_record is not None:
                on_record(rec)
    return gps.policy, gps.records, gps


def final_policy_kls(gps):
    """Per-condition per-step policy KLs for the current policy and controllers."""
    out = []
    for st in gps.conditions:
        lin = linearize_policy(gps.policy, st.marginals)
        out.append(policy_traj_kl(lin, st.controller, st.marginals))
    return np.array(out)
