"""Per-step linear-Gaussian dynamics fitted under a Gaussian-mixture prior.

A mixture model over transition triples ``(x_t, u_t, x_{t+1})`` is fitted to
samples pooled over all time steps and a window of recent iterations. At each
step its responsibility-weighted moments act as a normal-inverse-Wishart prior
for a Gaussian fit to that step's samples; conditioning the posterior joint
Gaussian on ``(x, u)`` gives affine dynamics with a constant term.
"""

from collections import deque
from dataclasses import dataclass, field
import logging

import numpy as np
from scipy.special import logsumexp

from .lingauss import Gaussian, LinearDynamicsModel, symmetrize

logger = logging.getLogger(__name__)

COV_FLOOR = 1e-6
EM_MAX_ITER = 100
EM_TOL = 1e-6
DEFAULT_MAX_CLUSTERS = 20
DEFAULT_WINDOW = 4  # current iteration plus three previous ones


@dataclass(frozen=True)
class GmmPrior:
    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    loglik_trace: tuple = field(default=())

    @property
    def n_clusters(self):
        return len(self.weights)

    @property
    def dim(self):
        return self.means.shape[1]

    def log_responsibilities(self, X):
        X = np.atleast_2d(X)
        return _log_resp(X, self.weights, self.means, self.covs)[0]

    def responsibilities(self, X):
        return np.exp(self.log_responsibilities(X))


@dataclass(frozen=True)
class NiwParams:
    """Normal-inverse-Wishart prior with mean strength ``m`` and covariance strength ``n0``.

    ``cov`` is the prior covariance; the NIW scatter matrix is ``n0 * cov``.
    """

    mean: np.ndarray
    cov: np.ndarray
    m: float
    n0: float

    def __post_init__(self):
        if self.m < 0 or self.n0 < 0:
            raise ValueError("prior strengths must be nonnegative")

    @property
    def scatter(self):
        return self.n0 * self.cov


# ----------------------------------------------------------------------------
# Gaussian mixture


def _log_gauss(X, mean, cov):
    L = np.linalg.cholesky(cov)
    z = np.linalg.solve(L, (X - mean).T)
    D = X.shape[1]
    return -0.5 * np.sum(z * z, axis=0) - np.log(np.diag(L)).sum() - 0.5 * D * np.log(2 * np.pi)


def _log_resp(X, weights, means, covs):
    with np.errstate(divide="ignore"):
        logw = np.log(weights)
    logp = np.stack([_log_gauss(X, means[i], covs[i]) for i in range(len(weights))], axis=1) + logw
    norm = logsumexp(logp, axis=1, keepdims=True)
    return logp - norm, float(norm.sum())


def _kmeans_pp(X, M, rng):
    """k-means++ seeding followed by a few Lloyd iterations; returns hard labels."""
    N = len(X)
    centers = [X[rng.integers(N)]]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for _ in range(1, M):
        total = d2.sum()
        idx = rng.integers(N) if total <= 0 else rng.choice(N, p=d2 / total)
        centers.append(X[idx])
        d2 = np.minimum(d2, np.sum((X - X[idx]) ** 2, axis=1))
    centers = np.array(centers)
    labels = np.zeros(N, dtype=int)
    for _ in range(10):
        dist = ((X[:, None, :] - centers[None]) ** 2).sum(axis=2)
        labels = np.argmin(dist, axis=1)
        for i in range(M):
            if np.any(labels == i):
                centers[i] = X[labels == i].mean(axis=0)
    return labels


def _m_step(X, resp, prev=None):
    N, D = X.shape
    Nk = resp.sum(axis=0)
    M = resp.shape[1]
    weights = Nk / N
    means = np.zeros((M, D))
    covs = np.zeros((M, D, D))
    eye = np.eye(D)
    for i in range(M):
        if Nk[i] < 1e-10:
            if prev is not None:
                means[i], covs[i] = prev[0][i], prev[1][i]
            else:
                means[i], covs[i] = X.mean(axis=0), np.cov(X.T, bias=True).reshape(D, D) + COV_FLOOR * eye
            continue
        means[i] = resp[:, i] @ X / Nk[i]
        diff = X - means[i]
        covs[i] = symmetrize((resp[:, i, None] * diff).T @ diff / Nk[i]) + COV_FLOOR * eye
    return weights, means, covs


def fit_gmm(data, max_clusters=DEFAULT_MAX_CLUSTERS, seed=0, max_iter=EM_MAX_ITER, tol=EM_TOL):
    """Fit a Gaussian mixture to pooled transition triples by EM.

    Args:
        data: (N, D) array of stacked ``[x, u, x']`` points.
        max_clusters: upper bound on the cluster count; the count actually
            used is ``min(max_clusters, N // 2)`` (at least one).
        seed: seeds the k-means++ initialization.
    """
    X = np.asarray(data, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("fit_gmm needs a non-empty (N, D) array")
    N, D = X.shape
    M = max(1, min(int(max_clusters), N // 2))
    rng = np.random.default_rng(seed)

    if M == 1:
        resp = np.ones((N, 1))
    else:
        labels = _kmeans_pp(X, M, rng)
        resp = np.zeros((N, M))
        resp[np.arange(N), labels] = 1.0
    weights, means, covs = _m_step(X, resp)
    trace = []
    for _ in range(max_iter):
        log_resp, ll = _log_resp(X, weights, means, covs)
        trace.append(ll)
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) <= tol * abs(trace[-2]):
            break
        weights, means, covs = _m_step(X, np.exp(log_resp), prev=(means, covs))
    weights = weights / weights.sum()
    return GmmPrior(weights, means, covs, tuple(trace))


def niw_prior_at(gmm, samples_t, m=1.0, n0=1.0):
    """Moment-matched NIW prior from the mixture's average responsibilities at one step."""
    r = gmm.responsibilities(np.asarray(samples_t, dtype=float)).mean(axis=0)
    r = r / r.sum()
    mu0 = r @ gmm.means
    diff = gmm.means - mu0
    cov = np.einsum("i,ijk->jk", r, gmm.covs) + np.einsum("i,ij,ik->jk", r, diff, diff)
    return NiwParams(mu0, symmetrize(cov), float(m), float(n0))


# ----------------------------------------------------------------------------
# Posterior fit and conditioning


def niw_posterior(samples, prior):
    """Posterior-mean Gaussian over the stacked triple."""
    X = np.asarray(samples, dtype=float)
    N = len(X)
    xbar = X.mean(axis=0)
    S = (X - xbar).T @ (X - xbar) / N
    if prior is None:
        return xbar, symmetrize(S)
    m, n0 = prior.m, prior.n0
    mean = np.array(prior.mean) if np.isinf(m) else (N * xbar + m * prior.mean) / (N + m)
    if np.isinf(n0):
        return mean, np.array(prior.cov)
    d = xbar - prior.mean
    shrink = N if np.isinf(m) else N * m / (N + m)
    cov = (n0 * prior.cov + N * S + shrink * np.outer(d, d)) / (N + n0)
    return mean, symmetrize(cov)


def _floor_eigs(S, floor):
    vals, vecs = np.linalg.eigh(symmetrize(S))
    if vals.min() >= floor:
        return S, False
    vals = np.maximum(vals, floor)
    return symmetrize((vecs * vals) @ vecs.T), True


def condition_gaussian(mean, cov, n_in):
    """Condition a joint Gaussian over ``[z; y]`` on ``z`` (first ``n_in`` entries).

    Returns (slope, offset, residual_cov, floored) with ``y | z ~ N(slope z + offset, residual_cov)``.
    """
    Szz, Syz, Syy = cov[:n_in, :n_in], cov[n_in:, :n_in], cov[n_in:, n_in:]
    Szz, floored = _floor_eigs(Szz, COV_FLOOR)
    slope = np.linalg.solve(Szz, Syz.T).T
    offset = mean[n_in:] - slope @ mean[:n_in]
    resid = symmetrize(Syy - slope @ Szz @ slope.T)
    vals, vecs = np.linalg.eigh(resid)
    resid = symmetrize((vecs * np.maximum(vals, 0.0)) @ vecs.T)
    return slope, offset, resid, floored


@dataclass(frozen=True)
class StepFit:
    fx: np.ndarray
    fu: np.ndarray
    fc: np.ndarray
    F: np.ndarray
    floored: bool


def fit_linear_dynamics(samples_t, prior, dX, dU):
    """Fit one transition of affine dynamics from ``(N, dX+dU+dX)`` triples."""
    X = np.atleast_2d(np.asarray(samples_t, dtype=float))
    if len(X) == 0:
        raise ValueError("no samples to fit")
    if X.shape[1] != 2 * dX + dU:
        raise ValueError(f"triples have width {X.shape[1]}, expected {2 * dX + dU}")
    mean, cov = niw_posterior(X, prior)
    slope, offset, F, floored = condition_gaussian(mean, cov, dX + dU)
    if floored:
        logger.debug("state-action covariance floored during conditioning")
    return StepFit(slope[:, :dX], slope[:, dX:], offset, F, floored)


# ----------------------------------------------------------------------------
# Sample history and full-horizon fitting


class TransitionHistory:
    """Rollout arrays from the last ``window`` iterations."""

    def __init__(self, window=DEFAULT_WINDOW):
        self._iters = deque(maxlen=window)

    def add(self, X, U):
        """Append one iteration of rollouts, X: (N, T, dX), U: (N, T, dU)."""
        X = np.asarray(X, dtype=float)
        U = np.asarray(U, dtype=float)
        if X.ndim != 3 or U.shape[:2] != X.shape[:2]:
            raise ValueError("expected X (N, T, dX) and U (N, T, dU)")
        self._iters.append((X, U))

    def __len__(self):
        return len(self._iters)

    @property
    def current(self):
        return self._iters[-1]

    def step_triples(self, t, which=-1):
        X, U = self._iters[which]
        return np.concatenate([X[:, t], U[:, t], X[:, t + 1]], axis=1)

    def pooled_triples(self):
        out = []
        for X, U in self._iters:
            N, T, _ = X.shape
            trip = np.concatenate([X[:, :-1], U[:, :-1], X[:, 1:]], axis=2)
            out.append(trip.reshape(N * (T - 1), -1))
        return np.concatenate(out, axis=0)


@dataclass(frozen=True)
class DynamicsFitConfig:
    use_prior: bool = True
    max_clusters: int = DEFAULT_MAX_CLUSTERS
    prior_strength: float = 1.0
    window: int = DEFAULT_WINDOW


def fit_dynamics(history, dX, dU, config=DynamicsFitConfig(), seed=0):
    """Fit dynamics for every transition of the current iteration.

    Returns (LinearDynamicsModel, initial-state Gaussian, GmmPrior or None).
    """
    X, U = history.current
    N, T, _ = X.shape
    gmm = None
    if config.use_prior:
        gmm = fit_gmm(history.pooled_triples(), config.max_clusters, seed)
    fx = np.zeros((T - 1, dX, dX))
    fu = np.zeros((T - 1, dX, dU))
    fc = np.zeros((T - 1, dX))
    F = np.zeros((T - 1, dX, dX))
    for t in range(T - 1):
        trip = history.step_triples(t)
        prior = None
        if gmm is not None:
            prior = niw_prior_at(gmm, trip, config.prior_strength, config.prior_strength)
        fit = fit_linear_dynamics(trip, prior, dX, dU)
        fx[t], fu[t], fc[t], F[t] = fit.fx, fit.fu, fit.fc, fit.F
    x0 = X[:, 0]
    mu0 = x0.mean(axis=0)
    S0 = (x0 - mu0).T @ (x0 - mu0) / N + COV_FLOOR * np.eye(dX)
    return LinearDynamicsModel(fx, fu, fc, F), Gaussian(mu0, S0), gmm
