"""Neural-network policy: two softplus hidden layers and a Gaussian action output.

The mean is regressed onto linear-Gaussian controller actions under
per-sample precision weights; the covariance is state independent and set in
closed form. Reverse-mode gradients are hand written.
"""

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .errors import DimensionError, TrainingDivergence
from .lingauss import TvlgController, symmetrize

HIDDEN = (40, 40)
SYNTHETIC_PER_STEP = 50
DIVERGENCE_LOSS = 1e6
SCHEMA_VERSION = 1


def softplus(z):
    return np.logaddexp(0.0, z)


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass(frozen=True)
class PolicyNetwork:
    """``forward(x) = W3 s(W2 s(W1 x_n + b1) + b2) + b3`` with ``x_n = (x - x_mean) / x_scale``."""

    weights: tuple
    biases: tuple
    cov: np.ndarray
    x_mean: np.ndarray
    x_scale: np.ndarray

    def __post_init__(self):
        dims = [self.weights[0].shape[1]] + [W.shape[0] for W in self.weights]
        for W, b, n_in, n_out in zip(self.weights, self.biases, dims[:-1], dims[1:]):
            if W.shape != (n_out, n_in) or b.shape != (n_out,):
                raise DimensionError("layer shapes do not chain")
        dU = dims[-1]
        if self.cov.shape != (dU, dU):
            raise DimensionError("covariance must be (dU, dU)")
        if self.x_mean.shape != (dims[0],) or self.x_scale.shape != (dims[0],):
            raise DimensionError("normalization vectors must match the input dimension")

    @property
    def dX(self):
        return self.weights[0].shape[1]

    @property
    def dU(self):
        return self.weights[-1].shape[0]

    @classmethod
    def create(cls, dX, dU, seed=0, hidden=HIDDEN, cov=None):
        """Zero-mean Gaussian weights scaled by ``1/sqrt(fan_in)``, zero biases."""
        rng = np.random.default_rng(seed)
        dims = (dX,) + tuple(hidden) + (dU,)
        weights = tuple(rng.standard_normal((o, i)) / np.sqrt(i) for i, o in zip(dims[:-1], dims[1:]))
        biases = tuple(np.zeros(o) for o in dims[1:])
        cov = np.eye(dU) if cov is None else np.asarray(cov, dtype=float)
        return cls(weights, biases, cov, np.zeros(dX), np.ones(dX))

    @property
    def params(self):
        return self.weights + self.biases

    def with_params(self, params):
        n = len(self.weights)
        return replace(self, weights=tuple(params[:n]), biases=tuple(params[n:]))

    def with_normalization(self, states):
        states = np.asarray(states, dtype=float)
        scale = states.std(axis=0)
        scale = np.where(scale > 1e-3, scale, 1.0)
        return replace(self, x_mean=states.mean(axis=0), x_scale=scale)

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "policy",
            "weights": [W.tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "cov": self.cov.tolist(),
            "x_mean": self.x_mean.tolist(),
            "x_scale": self.x_scale.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported policy schema version {d.get('schema_version')!r}")
        arr = lambda v: np.array(v, dtype=float)  # noqa: E731
        return cls(
            tuple(arr(W) for W in d["weights"]),
            tuple(arr(b) for b in d["biases"]),
            arr(d["cov"]),
            arr(d["x_mean"]),
            arr(d["x_scale"]),
        )


def _forward_cache(net, X):
    a = (X - net.x_mean) / net.x_scale
    acts, pre = [a], []
    n = len(net.weights)
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ W.T + b
        pre.append(z)
        a = softplus(z) if i < n - 1 else z
        acts.append(a)
    return acts, pre


def forward(net, state):
    """Mean action for one state (dX,) or a batch (N, dX)."""
    X = np.asarray(state, dtype=float)
    if X.shape[-1] != net.dX:
        raise DimensionError(f"policy expects states of dimension {net.dX}, got {X.shape[-1]}")
    acts, _ = _forward_cache(net, np.atleast_2d(X))
    out = acts[-1]
    return out[0] if X.ndim == 1 else out


def _backward(net, acts, pre, g_out):
    """Parameter gradients given dLoss/dOutput ``g_out`` (N, dU); returns (grads, dLoss/dInput)."""
    n = len(net.weights)
    gW, gb = [None] * n, [None] * n
    g = g_out
    for i in range(n - 1, -1, -1):
        gW[i] = g.T @ acts[i]
        gb[i] = g.sum(axis=0)
        g = g @ net.weights[i]
        if i > 0:
            g = g * sigmoid(pre[i - 1])
    return gW + gb, g / net.x_scale


def jacobian(net, state):
    """d forward / d state at one state, shape (dU, dX)."""
    x = np.asarray(state, dtype=float)[None, :]
    acts, pre = _forward_cache(net, x)
    rows = []
    for j in range(net.dU):
        e = np.zeros((1, net.dU))
        e[0, j] = 1.0
        rows.append(_backward(net, acts, pre, e)[1][0])
    return np.array(rows)


@dataclass(frozen=True)
class PolicyTrainingSet:
    """Supervised tuples; ``precision`` already includes the dual weight ``lam``."""

    states: np.ndarray
    actions: np.ndarray
    precision: np.ndarray
    lam: np.ndarray
    time: np.ndarray
    traj: np.ndarray
    synthetic: np.ndarray

    def __post_init__(self):
        N = len(self.states)
        for name in ("actions", "precision", "lam", "time", "traj", "synthetic"):
            if len(getattr(self, name)) != N:
                raise DimensionError(f"training set field {name} has the wrong length")

    def __len__(self):
        return len(self.states)

    @classmethod
    def concat(cls, sets):
        sets = [s for s in sets if len(s)]
        return cls(*(np.concatenate([getattr(s, f) for s in sets]) for f in cls.__dataclass_fields__))

    def with_weights(self, lam_of):
        """Rescale precisions by per-(traj, time) weights ``lam_of[traj, time]``."""
        lam = np.asarray(lam_of)[self.traj, self.time]
        ratio = np.where(self.lam > 0, lam / np.where(self.lam > 0, self.lam, 1.0), 0.0)
        return replace(self, precision=self.precision * ratio[:, None, None], lam=lam)

    def subset(self, mask):
        return PolicyTrainingSet(*(getattr(self, f)[mask] for f in self.__dataclass_fields__))


def controller_targets(ctrl, states, time, traj, lam=1.0, synthetic=False):
    """Tuples pairing ``states`` (N, dX) at steps ``time`` with the controller's mean actions."""
    states = np.asarray(states, dtype=float)
    time = np.asarray(time, dtype=int)
    K = ctrl.K[time]
    actions = ctrl.u_hat[time] + ctrl.k[time] + np.einsum("nij,nj->ni", K, states - ctrl.x_hat[time])
    lam = np.broadcast_to(np.asarray(lam, dtype=float), time.shape).copy()
    precision = ctrl.inv_C[time] * lam[:, None, None]
    n = len(states)
    return PolicyTrainingSet(
        states,
        actions,
        precision,
        lam,
        time,
        np.full(n, traj, dtype=int),
        np.full(n, bool(synthetic)),
    )


def _psd_sqrt(S):
    w, V = np.linalg.eigh(symmetrize(S))
    return V * np.sqrt(np.maximum(w, 0.0))


def synthesize_samples(marg, ctrl, per_step=SYNTHETIC_PER_STEP, seed=0, traj=0, lam=1.0):
    """Draw ``per_step`` states from every state marginal, labelled with the controller mean action."""
    if marg.T != ctrl.T:
        raise DimensionError("marginals and controller horizons differ")
    rng = np.random.default_rng(seed)
    mu, sigma = marg.state_mean, marg.state_cov
    T, dX = mu.shape
    states = np.empty((T, per_step, dX))
    for t in range(T):
        z = rng.standard_normal((per_step, dX))
        states[t] = mu[t] + z @ _psd_sqrt(sigma[t]).T
    time = np.repeat(np.arange(T), per_step)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (T,))[time]
    return controller_targets(ctrl, states.reshape(T * per_step, dX), time, traj, lam, synthetic=True)


def weighted_loss(net, data):
    """Mean over tuples of ``0.5 r' W r`` with ``r = forward(x) - target``."""
    r = forward(net, data.states) - data.actions
    return 0.5 * float(np.einsum("ni,nij,nj->", r, data.precision, r)) / len(data)


def loss_and_grad(net, data):
    acts, pre = _forward_cache(net, data.states)
    r = acts[-1] - data.actions
    Wr = np.einsum("nij,nj->ni", data.precision, r)
    N = len(data)
    loss = 0.5 * float(np.einsum("ni,ni->", r, Wr)) / N
    grads, _ = _backward(net, acts, pre, Wr / N)
    return loss, grads


def harmonic_covariance(data):
    """Policy covariance ``(sum W / sum lam)^-1``: the covariance minimizing the weighted KL."""
    total = data.lam.sum()
    if not total > 0:
        raise ValueError("training weights must have a positive sum")
    P = symmetrize(data.precision.sum(axis=0) / total)
    return symmetrize(scipy.linalg.inv(P))


@dataclass(frozen=True)
class TrainSchedule:
    epochs: int = 2000
    batch_size: int = 50
    learning_rate: float = 1e-3
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8


def train_policy(net, data, schedule=TrainSchedule(), set_normalization=None, set_covariance=True):
    """Adam on the precision-weighted regression loss; returns (net, per-epoch loss trace).

    Input normalization is fitted on the first call (all-default scale) and then
    kept fixed so the network's function is comparable across calls.
    """
    if len(data) == 0:
        raise ValueError("training set is empty")
    if set_normalization is None:
        set_normalization = np.all(net.x_scale == 1.0) and np.all(net.x_mean == 0.0)
    if set_normalization:
        net = net.with_normalization(data.states)
    if set_covariance:
        net = replace(net, cov=harmonic_covariance(data))

    rng = np.random.default_rng(schedule.seed)
    params = [p.copy() for p in net.params]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    N = len(data)
    bs = min(schedule.batch_size, N)
    step = 0
    trace = []
    # Heavily weighted data can start above the absolute threshold; only growth past it is divergence.
    start_loss = weighted_loss(net.with_params(params), data)
    for _ in range(schedule.epochs):
        order = rng.permutation(N)
        for start in range(0, N - bs + 1, bs):
            batch = data.subset(order[start : start + bs])
            _, grads = loss_and_grad(net.with_params(params), batch)
            step += 1
            lr = schedule.learning_rate * np.sqrt(1 - schedule.beta2**step) / (1 - schedule.beta1**step)
            for p, g, mi, vi in zip(params, grads, m, v):
                mi *= schedule.beta1
                mi += (1 - schedule.beta1) * g
                vi *= schedule.beta2
                vi += (1 - schedule.beta2) * g * g
                p -= lr * mi / (np.sqrt(vi) + schedule.adam_eps)
        loss = weighted_loss(net.with_params(params), data)
        trace.append(loss)
        if not np.isfinite(loss) or loss > max(DIVERGENCE_LOSS, start_loss):
            raise TrainingDivergence(f"policy loss {loss:.4g} after epoch {len(trace)}")
    return net.with_params(params), np.array(trace)


def linearize_policy(net, marg):
    """Per-step affine-Gaussian stand-in for the policy about the state-marginal means."""
    mu = marg.state_mean
    T, dX = mu.shape
    K = np.array([jacobian(net, mu[t]) for t in range(T)])
    offset = forward(net, mu) - np.einsum("tij,tj->ti", K, mu)
    C = np.broadcast_to(net.cov, (T, net.dU, net.dU))
    return TvlgController.from_affine(K, offset, C)


class PolicyActor:
    """Runs the network policy; samples the Gaussian action noise unless ``stochastic`` is off."""

    def __init__(self, net, stochastic=True):
        self.net = net
        self.stochastic = stochastic
        self._chol = np.linalg.cholesky(net.cov)

    def act(self, t, x, rng):
        u = forward(self.net, x)
        if self.stochastic:
            u = u + self._chol @ rng.standard_normal(self.net.dU)
        return u
