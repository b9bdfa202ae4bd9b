"""One-class Gaussian mixture: EM fitting and log-likelihood scoring.

Fitted on bonafide embeddings only; the log-likelihood of a test
embedding under the mixture is the detection score (higher = more
bonafide-like). Covariances are full matrices, kept positive-definite
by a small diagonal regularizer applied at every M-step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigurationError, FitError, InputError

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class EmConfig:
    """EM schedule. ``init`` is one of {"kmeans", "random_points"}."""

    n_components: int = 5
    max_iters: int = 200
    rel_tol: float = 1e-6
    cov_reg: float = 1e-6
    seed: int = 0
    init: str = "kmeans"

    def validate(self) -> None:
        if self.n_components < 1:
            raise ConfigurationError(f"n_components must be >= 1, got {self.n_components}")
        if self.max_iters < 1:
            raise ConfigurationError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.rel_tol <= 0 or self.cov_reg <= 0:
            raise ConfigurationError("rel_tol and cov_reg must be > 0")
        if self.init not in ("kmeans", "random_points"):
            raise ConfigurationError(f"unknown init {self.init!r}")


@dataclass
class GmmParams:
    """Mixture weights, means and full covariance matrices."""

    weights: np.ndarray      # (K,)
    means: np.ndarray        # (K, d)
    covariances: np.ndarray  # (K, d, d)

    @property
    def n_components(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def validate(self) -> None:
        if abs(self.weights.sum() - 1.0) > 1e-12 or np.any(self.weights < 0):
            raise ConfigurationError("mixture weights must be >= 0 and sum to 1")
        for k, cov in enumerate(self.covariances):
            if np.max(np.abs(cov - cov.T)) > 1e-12:
                raise ConfigurationError(f"covariance {k} is not symmetric")
            try:
                np.linalg.cholesky(cov)
            except np.linalg.LinAlgError:
                raise ConfigurationError(f"covariance {k} is not positive-definite")


def _component_log_densities(gmm: GmmParams, X: np.ndarray) -> np.ndarray:
    """ln(w_k) + ln N(x; mu_k, Sigma_k) for every sample/component pair."""
    N, d = X.shape
    K = gmm.n_components
    out = np.empty((N, K))
    for k in range(K):
        try:
            L = np.linalg.cholesky(gmm.covariances[k])
        except np.linalg.LinAlgError:
            raise FitError(f"covariance of component {k} is not positive-definite")
        diff = X - gmm.means[k]
        # Solve L z = diff^T; the Mahalanobis term is ||z||^2.
        z = np.linalg.solve(L, diff.T)
        maha = np.sum(z * z, axis=0)
        log_det = 2.0 * np.sum(np.log(np.diag(L)))
        out[:, k] = np.log(gmm.weights[k]) - 0.5 * (d * _LOG_2PI + log_det + maha)
    return out


def _check_input(gmm: GmmParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != gmm.dim:
        raise InputError(f"expected vectors of dimension {gmm.dim}, got shape {x.shape}")
    return X


def log_likelihood(gmm: GmmParams, x: np.ndarray) -> float:
    """ln p(x | mixture), computed with log-sum-exp over Cholesky factors."""
    X = _check_input(gmm, x)
    return float(logsumexp(_component_log_densities(gmm, X), axis=1)[0])


def log_likelihood_many(gmm: GmmParams, X: np.ndarray) -> np.ndarray:
    """Scores for a stack of vectors, one per row."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != gmm.dim:
        raise InputError(f"expected (N, {gmm.dim}) array, got shape {X.shape}")
    return logsumexp(_component_log_densities(gmm, X), axis=1)


def responsibilities(gmm: GmmParams, x: np.ndarray) -> np.ndarray:
    """Posterior component probabilities for one vector; sums to 1."""
    X = _check_input(gmm, x)
    log_dens = _component_log_densities(gmm, X)
    r = np.exp(log_dens[0] - logsumexp(log_dens[0]))
    return r / r.sum()


def _kmeans_init(X: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    """Farthest-point seeding followed by 10 Lloyd iterations."""
    N = len(X)
    centers = [X[rng.integers(N)]]
    for _ in range(K - 1):
        d2 = np.min(
            [np.sum((X - c) ** 2, axis=1) for c in centers], axis=0
        )
        centers.append(X[int(np.argmax(d2))])
    means = np.array(centers)
    for _ in range(10):
        d2 = np.sum((X[:, None, :] - means[None, :, :]) ** 2, axis=2)
        assign = np.argmin(d2, axis=1)
        for k in range(K):
            members = X[assign == k]
            if len(members):
                means[k] = members.mean(axis=0)
            else:
                # Re-seed an empty cluster at the worst-served point.
                means[k] = X[int(np.argmax(np.min(d2, axis=1)))]
    return means


def fit_em(
    embeddings: np.ndarray, cfg: EmConfig
) -> tuple[GmmParams, list[float]]:
    """Fit the mixture by EM and return it with the mean log-likelihood trace.

    The trace holds the mean per-sample log-likelihood at the start of each
    iteration and is non-decreasing up to tiny regularization slack. A
    component whose responsibility mass collapses is re-seeded at the
    lowest-likelihood point. Deterministic for fixed (data, cfg.seed).
    """
    cfg.validate()
    X = np.asarray(embeddings, dtype=float)
    if X.ndim != 2:
        raise InputError(f"expected (N, d) array of embeddings, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InputError("non-finite values in embeddings")
    N, d = X.shape
    K = cfg.n_components
    if N < K:
        raise FitError(f"need at least {K} embeddings to fit {K} components, got {N}")

    rng = np.random.default_rng(cfg.seed)
    if cfg.init == "kmeans":
        means = _kmeans_init(X, K, rng)
    else:
        means = X[rng.choice(N, size=K, replace=False)].copy()
    global_cov = np.cov(X, rowvar=False, bias=True).reshape(d, d) + cfg.cov_reg * np.eye(d)
    covs = np.repeat(global_cov[None, :, :], K, axis=0)
    weights = np.full(K, 1.0 / K)
    gmm = GmmParams(weights, means, covs)

    trace: list[float] = []
    prev = None
    for _ in range(cfg.max_iters):
        log_dens = _component_log_densities(gmm, X)
        ll_per_sample = logsumexp(log_dens, axis=1)
        mean_ll = float(ll_per_sample.mean())
        trace.append(mean_ll)
        if prev is not None and abs(mean_ll - prev) <= cfg.rel_tol * max(1.0, abs(prev)):
            break
        prev = mean_ll

        resp = np.exp(log_dens - ll_per_sample[:, None])
        resp /= resp.sum(axis=1, keepdims=True)
        mass = resp.sum(axis=0)

        starved = mass < 1e-8 * N
        if np.any(starved):
            worst = int(np.argmin(ll_per_sample))
            for k in np.nonzero(starved)[0]:
                means[k] = X[worst]
                covs[k] = global_cov
                mass[k] = 1.0
        weights = mass / mass.sum()
        for k in range(K):
            if starved[k]:
                continue
            means[k] = resp[:, k] @ X / mass[k]
            diff = X - means[k]
            cov = (resp[:, k, None] * diff).T @ diff / mass[k]
            covs[k] = 0.5 * (cov + cov.T) + cfg.cov_reg * np.eye(d)
        gmm = GmmParams(weights, means, covs)

    gmm.validate()
    return gmm, trace
