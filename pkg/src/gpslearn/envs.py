"""Simulated environments and rollouts.

Four kinds are bundled:

``linear-quadratic``
    ``x' = A x + B u + scale * n``; defaults to a planar double integrator.
``piecewise-linear-benchmark``
    10-dimensional state with region-dependent ``(A_i, B_i)`` selected by the
    first state coordinate.
``point-mass-contact``
    Planar point mass whose viscous drag switches across a horizontal boundary.
``planar-arm-insertion``
    Two-link torque-controlled arm carrying a peg that must be inserted into a
    chamfered hole; contact is a one-sided penalty spring with damping and
    smoothed Coulomb friction.

Mechanical environments expose the observation layout of
:meth:`gpslearn.layout.StateLayout.mechanical`. Target perturbations move the
physical target (the hole or goal point) without changing the nominal target
that the observation is measured against.
"""

from dataclasses import dataclass, field, asdict
import math

import numpy as np

from . import physics
from .cost import CostParams, trajectory_costs
from .errors import DimensionError, EnvironmentFault
from .layout import StateLayout

SPECTRAL_RADIUS = 0.98  # keeps the piecewise benchmark stable over long horizons

KINDS = ("linear-quadratic", "point-mass-contact", "piecewise-linear-benchmark", "planar-arm-insertion")


@dataclass(frozen=True)
class EnvSpec:
    kind: str
    horizon: int = 40
    control_period_s: float = 0.05
    substeps: int = 4
    noise_scale: float = 0.0
    init_std: float = 0.0
    perturbation_std: float = 0.0
    physical: dict = field(default_factory=dict)
    target: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown environment kind {self.kind!r}; expected one of {KINDS}")
        if self.horizon < 2:
            raise ValueError("horizon must be at least 2")
        if not self.control_period_s > 0:
            raise ValueError("control period must be positive")
        if self.noise_scale < 0 or self.init_std < 0 or self.perturbation_std < 0:
            raise ValueError("noise scales must be nonnegative")
        if self.substeps < 1:
            raise ValueError("substeps must be positive")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class TrajectorySample:
    states: np.ndarray
    actions: np.ndarray
    costs: np.ndarray
    terminal_distance: float
    seed: int
    perturbation: float = 0.0

    @property
    def T(self):
        return len(self.states)

    @property
    def total_cost(self):
        return float(self.costs.sum())

    def to_dict(self):
        return {
            "states": self.states.tolist(),
            "actions": self.actions.tolist(),
            "costs": self.costs.tolist(),
            "terminal_distance": self.terminal_distance,
            "seed": self.seed,
            "perturbation": self.perturbation,
        }


class Environment:
    """Base class: subclasses fill in dimensions, layout, and ``_step``."""

    def __init__(self, spec):
        self.spec = spec
        self.T = spec.horizon
        self._rng_noise = spec.noise_scale

    dX: int
    dU: int
    layout: StateLayout
    target_points: np.ndarray

    @property
    def noise_scale(self):
        return self.spec.noise_scale

    def default_cost(self, **overrides):
        return CostParams(target_points=tuple(self.target_points), **overrides)

    def initial_state(self, rng=None):
        raise NotImplementedError

    def step(self, state, action, noise=None, perturbation=0.0):
        state = np.asarray(state, dtype=float)
        action = np.asarray(action, dtype=float)
        if state.shape != (self.dX,) or action.shape != (self.dU,):
            raise DimensionError(
                f"step expects state ({self.dX},) and action ({self.dU},), "
                f"got {state.shape} and {action.shape}"
            )
        if noise is not None:
            noise = np.asarray(noise, dtype=float)
            if noise.shape != (self.dX,):
                raise DimensionError(f"noise must have shape ({self.dX},)")
        nxt = self._step(state, action, noise, perturbation)
        if not np.all(np.isfinite(nxt)):
            raise EnvironmentFault(f"{self.spec.kind}: non-finite state after step")
        return nxt

    def _step(self, state, action, noise, perturbation):
        raise NotImplementedError

    def point_positions(self, state):
        """Object-point positions relative to the nominal target."""
        return state[self.layout.target_displacement] + self.target_points

    def perturbation_shift(self, perturbation):
        return np.zeros_like(self.target_points)

    def terminal_distance(self, state, perturbation=0.0):
        """Distance of the object points to the actual (possibly perturbed) target."""
        actual = self.target_points + self.perturbation_shift(perturbation)
        return float(np.linalg.norm(self.point_positions(state) - actual))


# ----------------------------------------------------------------------------
# Linear kinds


def double_integrator(dt, dims=2):
    eye = np.eye(dims)
    A = np.block([[eye, dt * eye], [np.zeros((dims, dims)), eye]])
    B = np.vstack([0.5 * dt * dt * eye, dt * eye])
    return A, B


class LinearQuadraticEnv(Environment):
    def __init__(self, spec):
        super().__init__(spec)
        phys = dict(spec.physical)
        if "A" in phys:
            self.A = np.array(phys["A"], dtype=float)
            self.B = np.array(phys["B"], dtype=float)
        else:
            self.A, self.B = double_integrator(spec.control_period_s)
        self.dX, self.dU = self.B.shape
        if self.A.shape != (self.dX, self.dX):
            raise DimensionError("A must be square and match B")
        half = self.dX // 2
        self.layout = StateLayout(
            joint_angles=slice(0, half),
            joint_velocities=slice(half, self.dX),
            point_velocities=slice(self.dX, self.dX),
            target_displacement=slice(0, half),
            prev_action=slice(self.dX, self.dX),
            dim=self.dX,
        )
        self.target_points = np.zeros(half)
        default_mean = np.zeros(self.dX)
        default_mean[:half] = 1.0
        self.init_mean = np.array(spec.target.get("init_state", default_mean), dtype=float)

    def initial_state(self, rng=None):
        x = self.init_mean.copy()
        if self.spec.init_std > 0 and rng is not None:
            x = x + self.spec.init_std * rng.standard_normal(self.dX)
        return x

    def _step(self, state, action, noise, perturbation):
        x = self.A @ state + self.B @ action
        if noise is not None:
            x = x + self.noise_scale * noise
        return x


class PiecewiseLinearEnv(Environment):
    """Region-switched linear system; region ``i`` holds while ``x[0]`` lies in ``[b_{i-1}, b_i)``."""

    def __init__(self, spec):
        super().__init__(spec)
        phys = dict(spec.physical)
        self.dX = int(phys.get("state_dim", 10))
        self.dU = int(phys.get("action_dim", 2))
        self.boundaries = np.array(phys.get("boundaries", [-0.5, 0.5]), dtype=float)
        n_regions = len(self.boundaries) + 1
        rng = np.random.default_rng(int(phys.get("matrix_seed", 7)))
        self.As, self.Bs = [], []
        for _ in range(n_regions):
            G = rng.standard_normal((self.dX, self.dX))
            A = 0.9 * np.eye(self.dX) + 0.25 * G / math.sqrt(self.dX)
            rho = np.abs(np.linalg.eigvals(A)).max()
            if rho > SPECTRAL_RADIUS:
                A *= SPECTRAL_RADIUS / rho
            self.As.append(A)
            self.Bs.append(0.5 * rng.standard_normal((self.dX, self.dU)))
        half = self.dX // 2
        self.layout = StateLayout(
            joint_angles=slice(0, half),
            joint_velocities=slice(half, self.dX),
            point_velocities=slice(self.dX, self.dX),
            target_displacement=slice(0, 2),
            prev_action=slice(self.dX, self.dX),
            dim=self.dX,
        )
        self.target_points = np.zeros(2)
        self.init_mean = np.array(spec.target.get("init_state", np.zeros(self.dX)), dtype=float)

    def region(self, state):
        return int(np.searchsorted(self.boundaries, state[0], side="right"))

    def initial_state(self, rng=None):
        x = self.init_mean.copy()
        if self.spec.init_std > 0 and rng is not None:
            x = x + self.spec.init_std * rng.standard_normal(self.dX)
        return x

    def _step(self, state, action, noise, perturbation):
        i = self.region(state)
        x = self.As[i] @ state + self.Bs[i] @ action
        if noise is not None:
            x = x + self.noise_scale * noise
        return x


# ----------------------------------------------------------------------------
# Mechanical kinds


class MechanicalEnv(Environment):
    """Shared state assembly: ``[q, qdot, point velocities, p - p*, previous action]``."""

    n_joints = 2
    n_points = 1

    def _setup_layout(self):
        self.layout = StateLayout.mechanical(self.n_joints, self.n_points, self.dU)
        self.dX = self.layout.dim

    def points_and_velocities(self, q, dq):
        raise NotImplementedError

    def build_state(self, q, dq, prev_action):
        pts, vel = self.points_and_velocities(q, dq)
        return np.concatenate([q, dq, vel, pts - self.target_points, prev_action])

    def initial_state(self, rng=None):
        nq = self.n_joints
        core = self.init_core.copy()
        if self.spec.init_std > 0 and rng is not None:
            core = core + self.spec.init_std * rng.standard_normal(2 * nq)
        return self.build_state(core[:nq], core[nq:], np.zeros(self.dU))

    def _integrate(self, q, dq, action, perturbation):
        raise NotImplementedError

    def _step(self, state, action, noise, perturbation):
        L = self.layout
        q, dq = state[L.joint_angles], state[L.joint_velocities]
        q, dq = self._integrate(q, dq, action, perturbation)
        if noise is not None:
            dq = dq + self.noise_scale * noise[L.joint_velocities]
        return self.build_state(q, dq, action)


class PointMassContactEnv(MechanicalEnv):
    DEFAULTS = {
        "mass": 1.0,
        "viscosity_out": 0.5,
        "viscosity_in": 6.0,
        "boundary_y": 0.0,
        "force_scale": 1.0,
    }

    def __init__(self, spec):
        super().__init__(spec)
        unknown = set(spec.physical) - set(self.DEFAULTS)
        if unknown:
            raise ValueError(f"unknown point-mass parameters {sorted(unknown)}")
        phys = {**self.DEFAULTS, **spec.physical}
        self.params = np.array(
            [phys[name] for name in physics.POINTMASS_PARAM_NAMES[:-1]] + [spec.control_period_s]
        )
        self.dU = 2
        self._setup_layout()
        self.target_points = np.array(spec.target.get("position", [0.0, -0.1]), dtype=float)
        init = spec.target.get("init_position", [-0.3, 0.3])
        self.init_core = np.concatenate([np.asarray(init, dtype=float), np.zeros(2)])

    def points_and_velocities(self, q, dq):
        return np.array(q, dtype=float), np.array(dq, dtype=float)

    def perturbation_shift(self, perturbation):
        return np.array([float(perturbation), 0.0])

    def _integrate(self, q, dq, action, perturbation):
        x, y, vx, vy = physics.pointmass_step(
            q[0], q[1], dq[0], dq[1], action[0], action[1], self.params, self.spec.substeps
        )
        return np.array([x, y]), np.array([vx, vy])


class PlanarArmInsertionEnv(MechanicalEnv):
    """Two-link arm with a rigidly attached peg; the object points are the peg tip and base."""

    n_points = 2
    DEFAULTS = {
        "l1": 0.5,
        "l2": 0.5,
        "m1": 1.0,
        "m2": 1.0,
        "damping1": 0.5,
        "damping2": 0.5,
        "torque_scale": 1.0,
        "stiffness": 1e3,
        "contact_damping": 10.0,
        "friction": 0.2,
        "peg_length": 0.1,
        "peg_angle": -math.pi / 2 - 0.9,
        "half_width": 0.01,
        "hole_depth": 0.05,
        "target_depth": 0.04,
        "chamfer_width": 0.02,
        "chamfer_depth": 0.02,
        "contact": True,
        "torque_limit": math.inf,
    }
    DEFAULT_GOAL = (-0.3, 1.2)
    DEFAULT_START = (0.0, 0.8)

    def __init__(self, spec):
        super().__init__(spec)
        unknown = set(spec.physical) - set(self.DEFAULTS)
        if unknown:
            raise ValueError(f"unknown arm parameters {sorted(unknown)}")
        self.phys = {**self.DEFAULTS, **spec.physical}
        self.dU = 2
        self._setup_layout()
        self.goal_angles = np.array(spec.target.get("goal_angles", self.DEFAULT_GOAL), dtype=float)
        start = np.array(spec.target.get("start_angles", self.DEFAULT_START), dtype=float)
        self.init_core = np.concatenate([start, np.zeros(2)])
        self._base = self._param_vector(0.0, 0.0, 0.0, 1.0, contact=False)
        tip_x, tip_y, base_x, base_y = physics.arm_kinematics(*self.goal_angles, 0.0, 0.0, self._base)[:4]
        axis = np.array([tip_x - base_x, tip_y - base_y])
        self.axis = axis / np.linalg.norm(axis)
        self.tangent = np.array([self.axis[1], -self.axis[0]])
        self.target_points = np.array([tip_x, tip_y, base_x, base_y])
        self.mouth = self.target_points[:2] - self.phys["target_depth"] * self.axis
        self.params = self.perturbed_params(0.0)

    def _param_vector(self, hole_x, hole_y, axis_x, axis_y, contact):
        p = self.phys
        return np.array(
            [
                p["l1"], p["l2"], p["m1"], p["m2"], p["damping1"], p["damping2"], p["torque_scale"],
                p["stiffness"], p["contact_damping"], p["friction"],
                p["peg_length"], p["peg_angle"],
                hole_x, hole_y, axis_x, axis_y,
                p["half_width"], p["hole_depth"], p["chamfer_width"], p["chamfer_depth"],
                1.0 if contact else 0.0, self.spec.control_period_s,
            ],
            dtype=float,
        )  # fmt: skip

    def perturbed_params(self, perturbation):
        mouth = self.mouth + float(perturbation) * self.tangent
        return self._param_vector(mouth[0], mouth[1], self.axis[0], self.axis[1], bool(self.phys["contact"]))

    def perturbation_shift(self, perturbation):
        return np.tile(float(perturbation) * self.tangent, 2)

    def points_and_velocities(self, q, dq):
        tx, ty, bx, by, vtx, vty, vbx, vby = physics.arm_kinematics(q[0], q[1], dq[0], dq[1], self._base)
        return np.array([tx, ty, bx, by]), np.array([vtx, vty, vbx, vby])

    def energy(self, state, perturbation=0.0):
        L = self.layout
        q, dq = state[L.joint_angles], state[L.joint_velocities]
        p = self.params if perturbation == 0.0 else self.perturbed_params(perturbation)
        return physics.arm_energy(q[0], q[1], dq[0], dq[1], p)

    def _integrate(self, q, dq, action, perturbation):
        p = self.params if perturbation == 0.0 else self.perturbed_params(perturbation)
        # Motors saturate; the recorded action stays as commanded.
        lim = self.phys["torque_limit"]
        action = np.clip(action, -lim, lim)
        q1, q2, dq1, dq2 = physics.arm_step(
            q[0], q[1], dq[0], dq[1], action[0], action[1], p, self.spec.substeps
        )
        return np.array([q1, q2]), np.array([dq1, dq2])


_ENV_CLASSES = {
    "linear-quadratic": LinearQuadraticEnv,
    "point-mass-contact": PointMassContactEnv,
    "piecewise-linear-benchmark": PiecewiseLinearEnv,
    "planar-arm-insertion": PlanarArmInsertionEnv,
}


def make_env(spec):
    if isinstance(spec, dict):
        spec = EnvSpec(**spec)
    return _ENV_CLASSES[spec.kind](spec)


def step(env, state, action, noise=None, perturbation=0.0):
    return env.step(state, action, noise, perturbation)


# ----------------------------------------------------------------------------
# Actors and rollouts


class ControllerActor:
    """Runs a linear-Gaussian controller, sampling its action noise unless ``stochastic`` is off."""

    def __init__(self, controller, stochastic=True):
        self.controller = controller
        self.stochastic = stochastic

    def act(self, t, x, rng):
        u = self.controller.mean_action(t, x)
        if self.stochastic:
            u = u + self.controller.chol_C[t] @ rng.standard_normal(self.controller.dU)
        return u


def rollout(env, actor, seed, perturbation=0.0, cost=None, T=None):
    """Sample one fixed-length trajectory; deterministic given ``seed``."""
    T = env.T if T is None else int(T)
    cost = env.default_cost() if cost is None else cost
    rng = np.random.default_rng(seed)
    X = np.zeros((T, env.dX))
    U = np.zeros((T, env.dU))
    x = env.initial_state(rng)
    for t in range(T):
        u = np.asarray(actor.act(t, x, rng), dtype=float)
        if u.shape != (env.dU,):
            raise DimensionError(f"actor returned action of shape {u.shape}, expected ({env.dU},)")
        X[t], U[t] = x, u
        if t < T - 1:
            noise = rng.standard_normal(env.dX) if env.noise_scale > 0 else None
            x = env.step(x, u, noise, perturbation)
    costs = trajectory_costs(X, U, cost, env.layout)
    return TrajectorySample(X, U, costs, env.terminal_distance(X[-1], perturbation), int(seed), float(perturbation))
