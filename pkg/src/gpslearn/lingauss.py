"""Linear-Gaussian trajectory distributions and the KL-constrained LQG update.

Conventions used throughout:

* A controller acts as ``u = u_hat[t] + k[t] + K[t] @ (x - x_hat[t]) + noise``
  with ``noise ~ N(0, C[t])``. Offsets are stored relative to the nominal
  trajectory ``(x_hat, u_hat)``; :meth:`TvlgController.offset` gives the
  absolute affine form ``u = K x + offset``.
* Dynamics are affine: ``x' = fx x + fu u + fc + w`` with ``w ~ N(0, F)``.
* Stacked state-action vectors put the state first: ``xu = [x; u]``.
"""

from dataclasses import dataclass, field
from functools import cached_property
import logging

import numpy as np
import scipy.linalg

from .errors import DimensionError, IllConditionedError

logger = logging.getLogger(__name__)

ETA_MIN = 1e-4
ETA_MAX = 1e16
KL_TOLERANCE = 0.1
MAX_DGD_ITERATIONS = 50
REG_START = 1e-6
REG_MAX = 1e12


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def symmetrize(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


@dataclass(frozen=True)
class Gaussian:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _frozen(self.mean))
        object.__setattr__(self, "cov", _frozen(self.cov))
        n = self.mean.shape[0]
        if self.mean.ndim != 1 or self.cov.shape != (n, n):
            raise DimensionError(f"gaussian mean {self.mean.shape} vs cov {self.cov.shape}")


@dataclass(frozen=True)
class TvlgController:
    """Time-varying linear-Gaussian controller about a nominal trajectory."""

    K: np.ndarray
    k: np.ndarray
    C: np.ndarray
    x_hat: np.ndarray
    u_hat: np.ndarray

    def __post_init__(self):
        for name in ("K", "k", "C", "x_hat", "u_hat"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        T, dU, dX = self.K.shape
        expected = {
            "k": (T, dU),
            "C": (T, dU, dU),
            "x_hat": (T, dX),
            "u_hat": (T, dU),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise DimensionError(
                    f"controller field {name} has shape {getattr(self, name).shape}, expected {shape}"
                )

    @property
    def T(self):
        return self.K.shape[0]

    @property
    def dX(self):
        return self.K.shape[2]

    @property
    def dU(self):
        return self.K.shape[1]

    @classmethod
    def initial(cls, T, dX, dU, sigma0=1.0, u_hat=None):
        """Zero-gain controller with isotropic exploration noise ``sigma0**2 * I``."""
        u_hat = np.zeros((T, dU)) if u_hat is None else np.broadcast_to(u_hat, (T, dU))
        return cls(
            K=np.zeros((T, dU, dX)),
            k=np.zeros((T, dU)),
            C=np.tile(sigma0**2 * np.eye(dU), (T, 1, 1)),
            x_hat=np.zeros((T, dX)),
            u_hat=u_hat,
        )

    @classmethod
    def from_affine(cls, K, offset, C):
        """Build from the absolute form ``u = K x + offset``."""
        K = np.asarray(K, dtype=float)
        T, dU, dX = K.shape
        return cls(K=K, k=offset, C=C, x_hat=np.zeros((T, dX)), u_hat=np.zeros((T, dU)))

    def offset(self):
        """Absolute affine offset, shape (T, dU)."""
        return self.u_hat + self.k - np.einsum("tux,tx->tu", self.K, self.x_hat)

    def mean_action(self, t, x):
        return self.u_hat[t] + self.k[t] + self.K[t] @ (np.asarray(x) - self.x_hat[t])

    def mean_actions(self, t, X):
        """Mean actions for a batch of states ``X`` of shape (N, dX)."""
        return self.u_hat[t] + self.k[t] + (np.asarray(X) - self.x_hat[t]) @ self.K[t].T

    @cached_property
    def chol_C(self):
        try:
            return np.linalg.cholesky(self.C)
        except np.linalg.LinAlgError as exc:
            raise ValueError("controller covariance is not positive definite") from exc

    @cached_property
    def inv_C(self):
        L = self.chol_C
        eye = np.eye(self.dU)
        Linv = np.stack([scipy.linalg.solve_triangular(L[t], eye, lower=True) for t in range(self.T)])
        return np.einsum("tji,tjk->tik", Linv, Linv)

    @cached_property
    def logdet_C(self):
        return 2.0 * np.log(np.diagonal(self.chol_C, axis1=1, axis2=2)).sum(axis=1)

    def renominalized(self, x_hat):
        """Same control law expressed about new nominal states with ``k = 0``."""
        x_hat = np.asarray(x_hat, dtype=float)
        u_hat = self.offset() + np.einsum("tux,tx->tu", self.K, x_hat)
        return TvlgController(self.K, np.zeros_like(self.k), self.C, x_hat, u_hat)

    def to_dict(self):
        return {
            "T": self.T,
            "dX": self.dX,
            "dU": self.dU,
            "K": self.K.tolist(),
            "k": self.k.tolist(),
            "C": self.C.tolist(),
            "x_hat": self.x_hat.tolist(),
            "u_hat": self.u_hat.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            K=np.array(d["K"], dtype=float).reshape(d["T"], d["dU"], d["dX"]),
            k=np.array(d["k"], dtype=float).reshape(d["T"], d["dU"]),
            C=np.array(d["C"], dtype=float).reshape(d["T"], d["dU"], d["dU"]),
            x_hat=np.array(d["x_hat"], dtype=float).reshape(d["T"], d["dX"]),
            u_hat=np.array(d["u_hat"], dtype=float).reshape(d["T"], d["dU"]),
        )


@dataclass(frozen=True)
class LinearDynamicsModel:
    """Per-transition affine-Gaussian dynamics; arrays have leading length T-1."""

    fx: np.ndarray
    fu: np.ndarray
    fc: np.ndarray
    F: np.ndarray

    def __post_init__(self):
        for name in ("fx", "fu", "fc", "F"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        n, dX, _ = self.fx.shape
        dU = self.fu.shape[2]
        if (
            self.fx.shape != (n, dX, dX)
            or self.fu.shape != (n, dX, dU)
            or self.fc.shape != (n, dX)
            or self.F.shape != (n, dX, dX)
        ):
            raise DimensionError("inconsistent dynamics shapes")

    @property
    def T(self):
        return self.fx.shape[0] + 1

    @property
    def dX(self):
        return self.fx.shape[1]

    @property
    def dU(self):
        return self.fu.shape[2]

    @cached_property
    def fxu(self):
        return np.concatenate([self.fx, self.fu], axis=2)

    @classmethod
    def time_invariant(cls, A, B, T, c=None, F=None):
        A = np.asarray(A, dtype=float)
        B = np.asarray(B, dtype=float)
        dX = A.shape[0]
        c = np.zeros(dX) if c is None else np.asarray(c, dtype=float)
        F = np.zeros((dX, dX)) if F is None else np.asarray(F, dtype=float)
        n = T - 1
        return cls(
            fx=np.tile(A, (n, 1, 1)),
            fu=np.tile(B, (n, 1, 1)),
            fc=np.tile(c, (n, 1)),
            F=np.tile(F, (n, 1, 1)),
        )


@dataclass(frozen=True)
class QuadraticCostExpansion:
    """Second-order cost model about ``nominal`` (stacked [x; u], shape (T, dX+dU))."""

    l0: np.ndarray
    lxu: np.ndarray
    lxuxu: np.ndarray
    nominal: np.ndarray
    dX: int

    def __post_init__(self):
        for name in ("l0", "lxu", "lxuxu", "nominal"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        object.__setattr__(self, "lxuxu", _frozen(symmetrize(self.lxuxu)))
        T, n = self.lxu.shape
        if self.l0.shape != (T,) or self.lxuxu.shape != (T, n, n) or self.nominal.shape != (T, n):
            raise DimensionError("inconsistent cost expansion shapes")
        if not 0 < self.dX < n:
            raise DimensionError("state dimension must be smaller than the stacked dimension")

    @property
    def T(self):
        return self.l0.shape[0]

    @property
    def dU(self):
        return self.lxu.shape[1] - self.dX

    @property
    def x_hat(self):
        return self.nominal[:, : self.dX]

    @property
    def u_hat(self):
        return self.nominal[:, self.dX :]

    def __add__(self, other):
        if not np.array_equal(self.nominal, other.nominal):
            raise DimensionError("cannot add expansions about different nominals")
        return QuadraticCostExpansion(
            self.l0 + other.l0, self.lxu + other.lxu, self.lxuxu + other.lxuxu, self.nominal, self.dX
        )

    def evaluate(self, t, xu):
        d = np.asarray(xu) - self.nominal[t]
        return self.l0[t] + self.lxu[t] @ d + 0.5 * d @ self.lxuxu[t] @ d


@dataclass(frozen=True)
class ValueExpansion:
    """Q- and value-function expansions in deviation coordinates about the nominal.

    ``Qxuxu`` and ``Qxu`` are in the units of the augmented cost; dividing by
    ``temperature`` gives the modified-cost Q-function whose inverse action
    block equals the controller covariance.
    """

    Qxuxu: np.ndarray
    Qxu: np.ndarray
    Vxx: np.ndarray
    Vx: np.ndarray
    temperature: np.ndarray
    regularization: np.ndarray

    @property
    def Qtilde_uu(self):
        dX = self.Vx.shape[1]
        return self.Qxuxu[:, dX:, dX:] / self.temperature[:, None, None]


@dataclass(frozen=True)
class GaussianMarginals:
    """Per-step joint Gaussians over stacked ``[x_t; u_t]``."""

    mu: np.ndarray
    sigma: np.ndarray
    dX: int

    def __post_init__(self):
        object.__setattr__(self, "mu", _frozen(self.mu))
        object.__setattr__(self, "sigma", _frozen(self.sigma))

    @property
    def T(self):
        return self.mu.shape[0]

    @property
    def state_mean(self):
        return self.mu[:, : self.dX]

    @property
    def state_cov(self):
        return self.sigma[:, : self.dX, : self.dX]


@dataclass(frozen=True)
class DgdResult:
    controller: TvlgController
    eta: float
    kl: float
    iterations: int
    converged: bool
    constraint_active: bool
    at_boundary: bool = False
    history: tuple = field(default=())


# ----------------------------------------------------------------------------
# Backward pass


def _neg_log_gaussian_expansion(ctrl, x_hat, u_hat):
    """Quadratic expansion of ``-log p(u|x)`` in deviation coordinates.

    Returns (grad, hess) with shapes (T, n) and (T, n, n); constants dropped.
    """
    K = ctrl.K
    P = ctrl.inv_C
    d = np.einsum("tux,tx->tu", K, x_hat) + ctrl.offset() - u_hat
    PK = P @ K
    KtPK = np.swapaxes(K, 1, 2) @ PK
    hess = np.concatenate(
        [
            np.concatenate([KtPK, -np.swapaxes(PK, 1, 2)], axis=2),
            np.concatenate([-PK, P], axis=2),
        ],
        axis=1,
    )
    Pd = np.einsum("tuv,tv->tu", P, d)
    grad = np.concatenate([np.einsum("tux,tu->tx", K, Pd), -Pd], axis=1)
    return grad, hess


def _check_compatible(dyn, cost, *ctrls):
    if dyn.T != cost.T or dyn.dX != cost.dX or dyn.dU != cost.dU:
        raise DimensionError(
            f"dynamics (T={dyn.T}, dX={dyn.dX}, dU={dyn.dU}) and cost "
            f"(T={cost.T}, dX={cost.dX}, dU={cost.dU}) disagree"
        )
    for c in ctrls:
        if c is not None and (c.T, c.dX, c.dU) != (cost.T, cost.dX, cost.dU):
            raise DimensionError("controller dimensions disagree with cost")


def backward_pass(dyn, cost, prev, eta, policy=None, policy_weights=None):
    """Solve the maximum-entropy LQG problem under the KL-modified cost.

    The modified cost at step ``t`` is ``(l - eta log prev - lam_t log policy) / (eta + lam_t)``,
    which reduces to ``l / eta - log prev`` without a policy term. With
    ``prev=None`` this is plain maximum-entropy LQG at temperature ``eta``.

    Args:
        dyn: fitted dynamics, length T-1.
        cost: quadratic cost expansion; its nominal becomes the new controller's nominal.
        prev: previous controller or None.
        eta: positive Lagrange multiplier of the KL constraint.
        policy: optional linear-Gaussian stand-in for the nonlinear policy
            (a :class:`TvlgController`), pulled toward with per-step weights.
        policy_weights: (T,) nonnegative dual variables for ``policy``.

    Returns:
        (controller, value_expansion)
    """
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    _check_compatible(dyn, cost, prev, policy)
    T, dX, dU = cost.T, cost.dX, cost.dU
    x_hat, u_hat = cost.x_hat, cost.u_hat

    c_xu = np.array(cost.lxu)
    c_xuxu = np.array(cost.lxuxu)
    temperature = np.full(T, float(eta))
    if prev is not None:
        g, H = _neg_log_gaussian_expansion(prev, x_hat, u_hat)
        c_xu += eta * g
        c_xuxu += eta * H
    if policy is not None:
        lam = np.broadcast_to(np.asarray(policy_weights, dtype=float), (T,))
        g, H = _neg_log_gaussian_expansion(policy, x_hat, u_hat)
        c_xu += lam[:, None] * g
        c_xuxu += lam[:, None, None] * H
        temperature = temperature + lam

    # Affine residual of the nominal under the dynamics.
    resid = (
        np.einsum("tij,tj->ti", dyn.fx, x_hat[:-1])
        + np.einsum("tij,tj->ti", dyn.fu, u_hat[:-1])
        + dyn.fc
        - x_hat[1:]
    )
    fxu = dyn.fxu

    K = np.zeros((T, dU, dX))
    k = np.zeros((T, dU))
    C = np.zeros((T, dU, dU))
    Qxuxu = np.zeros((T, dX + dU, dX + dU))
    Qxu = np.zeros((T, dX + dU))
    Vxx = np.zeros((T, dX, dX))
    Vx = np.zeros((T, dX))
    regs = np.zeros(T)
    ix, iu = slice(0, dX), slice(dX, dX + dU)
    eye_u = np.eye(dU)

    for t in range(T - 1, -1, -1):
        Qtt = c_xuxu[t].copy()
        Qt = c_xu[t].copy()
        if t < T - 1:
            Qtt += fxu[t].T @ Vxx[t + 1] @ fxu[t]
            Qt += fxu[t].T @ (Vx[t + 1] + Vxx[t + 1] @ resid[t])
        Qtt = symmetrize(Qtt)
        Qxuxu[t], Qxu[t] = Qtt, Qt

        w = temperature[t]
        Quu_tilde = Qtt[iu, iu] / w
        delta = 0.0
        while True:
            try:
                L = np.linalg.cholesky(Quu_tilde + delta * eye_u)
                break
            except np.linalg.LinAlgError:
                delta = REG_START if delta == 0.0 else 2.0 * delta
                if delta > REG_MAX:
                    raise IllConditionedError(
                        f"Q_uu not positive definite at step {t} after regularization", step=t
                    ) from None
        if delta > 0:
            logger.debug("regularized Q_uu at step %d by %.3g", t, delta)
        regs[t] = delta
        # Solve with the (possibly regularized) modified curvature; gains are scale free.
        Linv = scipy.linalg.solve_triangular(L, eye_u, lower=True)
        Quu_tilde_inv = Linv.T @ Linv
        K[t] = -Quu_tilde_inv @ Qtt[iu, ix] / w
        k[t] = -Quu_tilde_inv @ Qt[iu] / w
        C[t] = symmetrize(Quu_tilde_inv)

        Quu = Qtt[iu, iu]
        cross = Qtt[ix, iu] @ K[t]
        Vxx[t] = symmetrize(Qtt[ix, ix] + K[t].T @ Quu @ K[t] + cross + cross.T)
        Vx[t] = Qt[ix] + K[t].T @ Quu @ k[t] + K[t].T @ Qt[iu] + Qtt[ix, iu] @ k[t]

    ctrl = TvlgController(K=K, k=k, C=C, x_hat=x_hat, u_hat=u_hat)
    return ctrl, ValueExpansion(Qxuxu, Qxu, Vxx, Vx, temperature, regs)


# ----------------------------------------------------------------------------
# Forward propagation and expectations


def forward_marginals(dyn, ctrl, init):
    """Propagate exact Gaussian state-action marginals through affine dynamics."""
    if (dyn.T, dyn.dX, dyn.dU) != (ctrl.T, ctrl.dX, ctrl.dU):
        raise DimensionError("dynamics and controller disagree")
    if init.mean.shape != (ctrl.dX,):
        raise DimensionError("initial state dimension mismatch")
    T, dX, dU = ctrl.T, ctrl.dX, ctrl.dU
    K, off, Cu = ctrl.K, ctrl.offset(), ctrl.C
    mu = np.zeros((T, dX + dU))
    sigma = np.zeros((T, dX + dU, dX + dU))
    mx, Sx = init.mean.copy(), init.cov.copy()
    fxu = dyn.fxu
    for t in range(T):
        KS = K[t] @ Sx
        mu[t, :dX] = mx
        mu[t, dX:] = K[t] @ mx + off[t]
        sigma[t, :dX, :dX] = Sx
        sigma[t, dX:, :dX] = KS
        sigma[t, :dX, dX:] = KS.T
        sigma[t, dX:, dX:] = KS @ K[t].T + Cu[t]
        sigma[t] = symmetrize(sigma[t])
        if t < T - 1:
            mx = fxu[t] @ mu[t] + dyn.fc[t]
            Sx = symmetrize(fxu[t] @ sigma[t] @ fxu[t].T + dyn.F[t])
    return GaussianMarginals(mu, sigma, dX)


def expected_cost_per_step(marg, cost):
    if marg.T != cost.T or marg.mu.shape[1] != cost.lxu.shape[1]:
        raise DimensionError("marginals and cost disagree")
    d = marg.mu - cost.nominal
    return (
        cost.l0
        + np.einsum("ti,ti->t", cost.lxu, d)
        + 0.5 * np.einsum("ti,tij,tj->t", d, cost.lxuxu, d)
        + 0.5 * np.einsum("tij,tji->t", cost.lxuxu, marg.sigma)
    )


def expected_cost(marg, cost):
    """Analytic expectation of the quadratic cost model under Gaussian marginals."""
    return float(expected_cost_per_step(marg, cost).sum())


def expected_action_kl(new, old, state_mean, state_cov):
    """Per-step ``E_x[KL(new(u|x) || old(u|x))]`` for x ~ N(state_mean[t], state_cov[t])."""
    if (new.T, new.dX, new.dU) != (old.T, old.dX, old.dU):
        raise DimensionError("controllers disagree in dimensions")
    dU = new.dU
    P_old = old.inv_C
    dK = new.K - old.K
    dk = new.offset() - old.offset()
    dm = np.einsum("tux,tx->tu", dK, state_mean) + dk
    mean_term = np.einsum("tu,tuv,tv->t", dm, P_old, dm)
    spread = np.einsum("tux,tuv,tvy,tyx->t", dK, P_old, dK, state_cov)
    trace = np.einsum("tuv,tvu->t", P_old, new.C)
    kl = 0.5 * (trace + mean_term + spread - dU + old.logdet_C - new.logdet_C)
    return np.maximum(kl, 0.0)


def traj_kl(new, old, marg):
    """KL divergence between trajectory distributions sharing dynamics and initial state."""
    if marg.T != new.T:
        raise DimensionError("marginals and controller disagree")
    return float(expected_action_kl(new, old, marg.state_mean, marg.state_cov).sum())


# ----------------------------------------------------------------------------
# Dual gradient descent on eta


def dgd_solve(
    dyn,
    cost,
    prev,
    init,
    epsilon,
    eta0=1.0,
    *,
    eta_min=ETA_MIN,
    eta_max=ETA_MAX,
    tol=KL_TOLERANCE,
    max_iter=MAX_DGD_ITERATIONS,
    policy=None,
    policy_weights=None,
):
    """Find the controller minimizing expected cost subject to ``traj_kl <= epsilon``.

    Bracketed search on ``log eta``: interpolates ``log KL`` linearly in
    ``log eta`` once both sides are known and extrapolates with an assumed
    slope of -2 before that (the deviation from ``prev`` scales like
    ``1 / eta`` for large eta).
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")

    history = []

    def solve(eta):
        # An indefinite subproblem means eta is too small to convexify the
        # modified cost; it is treated like an over-large KL.
        try:
            ctrl, _ = backward_pass(dyn, cost, prev, eta, policy, policy_weights)
            kl = traj_kl(ctrl, prev, forward_marginals(dyn, ctrl, init))
        except IllConditionedError:
            ctrl, kl = None, np.inf
        if not np.isfinite(kl):
            ctrl, kl = None, np.inf
        history.append((eta, kl))
        return ctrl, kl

    def done(ctrl, eta, kl, n, converged, active, boundary=False):
        return DgdResult(ctrl, float(eta), float(kl), n, converged, active, boundary, tuple(history))

    lo = hi = None  # (log_eta, log_kl) pairs with kl > eps and kl < eps respectively
    log_eps = np.log(epsilon)
    eta = float(np.clip(eta0, eta_min, eta_max))
    best = None
    for it in range(1, max_iter + 1):
        ctrl, kl = solve(eta)
        if ctrl is not None and (best is None or abs(kl - epsilon) < abs(best[1] - epsilon)):
            best = (ctrl, kl, eta)
        if abs(kl - epsilon) <= tol * epsilon:
            return done(ctrl, eta, kl, it, True, True)
        log_kl = np.log(max(kl, 1e-300))
        if kl < epsilon:
            if eta <= eta_min:
                return done(ctrl, eta, kl, it, True, False)
            hi = (np.log(eta), log_kl)
        else:
            if eta >= eta_max:
                if ctrl is None:
                    raise IllConditionedError("subproblem indefinite even at the eta upper clamp")
                logger.warning("KL %.3g exceeds epsilon %.3g at the eta upper clamp", kl, epsilon)
                return done(ctrl, eta, kl, it, False, True, boundary=True)
            lo = (np.log(eta), log_kl)

        if lo is not None and hi is not None:
            (a, fa), (b, fb) = lo, hi
            if b - a < 1e-12:
                break
            frac = (fa - log_eps) / (fa - fb) if np.isfinite(fa) and fa != fb else 0.5
            frac = float(np.clip(frac, 0.05, 0.95))
            log_eta = a + frac * (b - a)
        elif hi is not None:
            # Need smaller eta; first probe the lower clamp, which settles the
            # inactive case immediately.
            log_eta = max(np.log(eta_min), hi[0] - np.clip(0.5 * (log_eps - hi[1]), np.log(1.5), np.log(1e3)))
            if len(history) == 1:
                log_eta = np.log(eta_min)
        else:
            log_eta = lo[0] + np.clip(0.5 * (lo[1] - log_eps), np.log(1.5), np.log(1e3))
            log_eta = min(log_eta, np.log(eta_max))
        eta = float(np.exp(log_eta))
        if eta <= eta_min * (1 + 1e-9):
            eta = eta_min
        elif eta >= eta_max * (1 - 1e-9):
            eta = eta_max

    if best is None:
        raise IllConditionedError("no well-posed subproblem found in the eta search")
    ctrl, kl, eta = best
    boundary = eta >= eta_max or eta <= eta_min
    logger.warning("DGD did not reach the KL band: kl=%.4g epsilon=%.4g", kl, epsilon)
    return done(ctrl, eta, kl, len(history), False, True, boundary=boundary)
