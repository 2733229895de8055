"""Manipulation cost: Lorentzian target penalty plus quadratic effort terms."""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .lingauss import QuadraticCostExpansion


@dataclass(frozen=True)
class Waypoint:
    """Alternative target used for steps ``t_start <= t <= t_end``."""

    t_start: int
    t_end: int
    points: tuple

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(float(p) for p in self.points))
        if self.t_end < self.t_start or self.t_start < 0:
            raise ValueError(f"bad waypoint window [{self.t_start}, {self.t_end}]")


@dataclass(frozen=True)
class CostParams:
    target_points: tuple
    w: float = 1.0
    v: float = 1.0
    alpha: float = 1e-5
    torque_weight: float = 1e-3
    velocity_weight: float = 1e-2
    waypoints: tuple = field(default=())
    spin_rate: float = 0.0
    spin_weight: float = 0.0
    spin_joint: int = -1

    def __post_init__(self):
        object.__setattr__(self, "target_points", tuple(float(p) for p in self.target_points))
        object.__setattr__(
            self,
            "waypoints",
            tuple(wp if isinstance(wp, Waypoint) else Waypoint(**wp) for wp in self.waypoints),
        )
        if self.w < 0 or self.v < 0:
            raise ValueError("w and v must be nonnegative")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.torque_weight < 0 or self.velocity_weight < 0 or self.spin_weight < 0:
            raise ValueError("penalty weights must be nonnegative")
        windows = sorted((wp.t_start, wp.t_end) for wp in self.waypoints)
        for (_, e0), (s1, _) in zip(windows, windows[1:]):
            if s1 <= e0:
                raise ValueError("waypoint windows overlap")
        for wp in self.waypoints:
            if len(wp.points) != len(self.target_points):
                raise DimensionError("waypoint dimension differs from target dimension")

    def check_horizon(self, T):
        for wp in self.waypoints:
            if wp.t_end >= T:
                raise ValueError(f"waypoint window ends at {wp.t_end}, beyond horizon {T}")

    def target_shift(self, T):
        """Per-step ``p*_t - p*``, shape (T, P)."""
        shift = np.zeros((T, len(self.target_points)))
        base = np.asarray(self.target_points)
        for wp in self.waypoints:
            shift[wp.t_start : wp.t_end + 1] = np.asarray(wp.points) - base
        return shift

    def to_dict(self):
        return {
            "target_points": list(self.target_points),
            "w": self.w,
            "v": self.v,
            "alpha": self.alpha,
            "torque_weight": self.torque_weight,
            "velocity_weight": self.velocity_weight,
            "waypoints": [
                {"t_start": wp.t_start, "t_end": wp.t_end, "points": list(wp.points)}
                for wp in self.waypoints
            ],
            "spin_rate": self.spin_rate,
            "spin_weight": self.spin_weight,
            "spin_joint": self.spin_joint,
        }


def lorentzian(d, params):
    """``w d^2 + v log(d^2 + alpha)``."""
    d2 = np.square(d)
    return params.w * d2 + params.v * np.log(d2 + params.alpha)


def lorentzian_sq_curvature(d, params):
    """Second derivative of :func:`lorentzian` with respect to the squared distance."""
    return -params.v / (np.square(d) + params.alpha) ** 2


def _target_error(states, params, layout, T):
    disp = states[:, layout.target_displacement]
    if disp.shape[1] != len(params.target_points):
        raise DimensionError(
            f"state carries {disp.shape[1]} target coordinates, cost expects {len(params.target_points)}"
        )
    return disp - params.target_shift(T)[: len(states)]


def _spin_index(params, layout):
    return range(layout.joint_velocities.start, layout.joint_velocities.stop)[params.spin_joint]


def trajectory_costs(states, actions, params, layout):
    """Per-step cost for arrays of shape (T, dX) and (T, dU)."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    actions = np.atleast_2d(np.asarray(actions, dtype=float))
    if states.shape[1] != layout.dim:
        raise DimensionError(f"state dimension {states.shape[1]} != layout dimension {layout.dim}")
    if len(states) != len(actions):
        raise DimensionError("states and actions differ in length")
    err = _target_error(states, params, layout, len(states))
    d2 = np.sum(err**2, axis=1)
    c = params.w * d2 + params.v * np.log(d2 + params.alpha)
    c = c + params.torque_weight * np.sum(actions**2, axis=1)
    c = c + params.velocity_weight * np.sum(states[:, layout.joint_velocities] ** 2, axis=1)
    if params.spin_weight > 0:
        c = c + params.spin_weight * (states[:, _spin_index(params, layout)] - params.spin_rate) ** 2
    return c


def eval_cost(state, action, t, params, layout):
    state = np.asarray(state, dtype=float)
    if state.shape != (layout.dim,):
        raise DimensionError(f"state shape {state.shape} does not match layout dimension {layout.dim}")
    T = max(t + 1, max((wp.t_end + 1 for wp in params.waypoints), default=0))
    states = np.zeros((T, layout.dim))
    actions = np.zeros((T, np.size(action)))
    states[t] = state
    actions[t] = action
    return float(trajectory_costs(states, actions, params, layout)[t])


def quadratic_expansion(params, states, actions, layout):
    """Analytic gradient/Hessian of the per-step cost about a nominal trajectory.

    Args:
        states: (T, dX) nominal states.
        actions: (T, dU) nominal actions.

    The log term keeps its (possibly negative) curvature.
    """
    states = np.asarray(states, dtype=float)
    actions = np.asarray(actions, dtype=float)
    T, dX = states.shape
    dU = actions.shape[1]
    params.check_horizon(T)
    n = dX + dU
    l0 = trajectory_costs(states, actions, params, layout)
    lxu = np.zeros((T, n))
    lxuxu = np.zeros((T, n, n))

    err = _target_error(states, params, layout, T)
    s = np.sum(err**2, axis=1)
    inv = 1.0 / (s + params.alpha)
    radial = 2.0 * params.w + 2.0 * params.v * inv
    idx = np.arange(layout.target_displacement.start, layout.target_displacement.stop)
    lxu[:, idx] = radial[:, None] * err
    P = len(idx)
    lxuxu[:, idx[:, None], idx[None, :]] = radial[:, None, None] * np.eye(P) - (
        4.0 * params.v * inv**2
    )[:, None, None] * np.einsum("ti,tj->tij", err, err)

    vel = np.arange(layout.joint_velocities.start, layout.joint_velocities.stop)
    lxu[:, vel] += 2.0 * params.velocity_weight * states[:, vel]
    lxuxu[:, vel, vel] += 2.0 * params.velocity_weight
    if params.spin_weight > 0:
        j = _spin_index(params, layout)
        lxu[:, j] += 2.0 * params.spin_weight * (states[:, j] - params.spin_rate)
        lxuxu[:, j, j] += 2.0 * params.spin_weight

    ua = np.arange(dX, n)
    lxu[:, ua] += 2.0 * params.torque_weight * actions
    lxuxu[:, ua, ua] += 2.0 * params.torque_weight

    return QuadraticCostExpansion(l0, lxu, lxuxu, np.concatenate([states, actions], axis=1), dX)


def sample_averaged_expansion(params, states, actions, layout):
    """Average of per-sample expansions, re-centered on the sample-mean trajectory.

    Args:
        states: (N, T, dX) sampled states.
        actions: (N, T, dU) sampled actions.

    Each sample's expansion is a quadratic in (x, u); their mean is again a
    quadratic, written here about the mean trajectory. Averaging the Hessian
    over samples spread around the target smooths out the strongly negative
    radial curvature of the log term at any single point.
    """
    states = np.asarray(states, dtype=float)
    actions = np.asarray(actions, dtype=float)
    if states.ndim == 2:
        return quadratic_expansion(params, states, actions, layout)
    mean_x, mean_u = states.mean(axis=0), actions.mean(axis=0)
    nominal = np.concatenate([mean_x, mean_u], axis=1)
    l0 = 0.0
    lxu = 0.0
    lxuxu = 0.0
    for X, U in zip(states, actions):
        e = quadratic_expansion(params, X, U, layout)
        dz = nominal - e.nominal
        Hdz = np.einsum("tij,tj->ti", e.lxuxu, dz)
        l0 = l0 + e.l0 + np.einsum("ti,ti->t", e.lxu, dz) + 0.5 * np.einsum("ti,ti->t", dz, Hdz)
        lxu = lxu + e.lxu + Hdz
        lxuxu = lxuxu + e.lxuxu
    n = len(states)
    return QuadraticCostExpansion(l0 / n, lxu / n, lxuxu / n, nominal, mean_x.shape[1])


def clip_negative_curvature(expansion, floor=0.0):
    """Project each step's Hessian onto the PSD cone (eigenvalues below ``floor`` raised to it).

    The gradient and constant are kept, so the expansion still matches the
    cost to first order at the nominal.
    """
    H = np.array(expansion.lxuxu)
    w, V = np.linalg.eigh(H)
    H = np.einsum("tij,tj,tkj->tik", V, np.maximum(w, floor), V)
    H = 0.5 * (H + np.swapaxes(H, 1, 2))
    return QuadraticCostExpansion(expansion.l0, expansion.lxu, H, expansion.nominal, expansion.dX)
