"""Non-private Gaussian-mixture primitives: E-step, M-steps, likelihood.

These are the building blocks that the private estimators wrap. Everything
is computed in the log domain where it matters for stability.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.special import logsumexp

from .data import BoundedDataset
from .errors import DegenerateComponentError, SingularCovarianceError
from .mechanisms import psd_project

PSD_FLOOR = 1e-6
SIMPLEX_TOL = 1e-9
SYM_TOL = 1e-9

# Components whose soft count falls below this fraction of N are treated as
# degenerate (see m_step_mle and fit_em).
COUNT_FLOOR_FRACTION = 1e-8


@dataclass(frozen=True)
class MoGParams:
    """Mixture weights on the simplex plus K means and K SPD covariances."""

    weights: np.ndarray
    means: np.ndarray        # (K, d)
    covariances: np.ndarray  # (K, d, d)
    psd_floor: float = PSD_FLOOR

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        mu = np.asarray(self.means, dtype=float)
        cov = np.asarray(self.covariances, dtype=float)
        if w.ndim != 1 or mu.ndim != 2 or cov.ndim != 3:
            raise ValueError("weights must be 1-d, means 2-d, covariances 3-d")
        k = w.shape[0]
        if mu.shape[0] != k or cov.shape[0] != k or cov.shape[1:] != (mu.shape[1],) * 2:
            raise ValueError("inconsistent shapes across weights/means/covariances")
        if (w < -SIMPLEX_TOL).any() or abs(w.sum() - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"weights are not on the simplex (sum={w.sum()!r})")
        for j in range(k):
            if np.abs(cov[j] - cov[j].T).max() > SYM_TOL:
                raise ValueError(f"covariance {j} is not symmetric")
            min_eig = float(np.linalg.eigvalsh(cov[j]).min())
            # small relative slack: eigenvalues of a clamped-then-rebuilt
            # matrix can undershoot the floor by rounding error
            if min_eig < self.psd_floor - 1e-9 * max(1.0, float(np.abs(cov[j]).max())):
                raise ValueError(
                    f"covariance {j} has eigenvalue {min_eig:.3e} below floor"
                )
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covariances", cov)

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def d(self) -> int:
        return self.means.shape[1]


@dataclass(frozen=True)
class Responsibilities:
    """Posterior membership probabilities, one row per data point."""

    gamma: np.ndarray  # (N, K)

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float)
        if g.ndim != 2:
            raise ValueError("gamma must be an N x K matrix")
        if (g < -1e-12).any() or (g > 1 + 1e-12).any():
            raise ValueError("responsibilities outside [0, 1]")
        if np.abs(g.sum(axis=1) - 1.0).max() > SIMPLEX_TOL:
            raise ValueError("responsibility rows must sum to 1")
        object.__setattr__(self, "gamma", g)

    @property
    def counts(self) -> np.ndarray:
        """Soft per-component counts N_k."""
        return self.gamma.sum(axis=0)


@dataclass(frozen=True)
class MapPrior:
    """Dirichlet prior on the weights and normal-inverse-Wishart on (mean, cov)."""

    dirichlet_alpha: np.ndarray
    kappa0: float
    nu0: float
    s0: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.dirichlet_alpha, dtype=float)
        s0 = np.asarray(self.s0, dtype=float)
        if self.kappa0 <= 0 or self.nu0 <= 0:
            raise ValueError("kappa0 and nu0 must be positive")
        if s0.ndim != 2 or s0.shape[0] != s0.shape[1]:
            raise ValueError("s0 must be a square matrix")
        if np.linalg.eigvalsh(s0).min() <= 0:
            raise ValueError("s0 must be positive definite")
        object.__setattr__(self, "dirichlet_alpha", alpha)
        object.__setattr__(self, "s0", s0)

    @classmethod
    def default(cls, n_components: int, d: int) -> "MapPrior":
        """Conventional hyperparameters: alpha=2, kappa0=1, nu0=d+2, S0=0.1*I."""
        return cls(
            dirichlet_alpha=np.full(n_components, 2.0),
            kappa0=1.0,
            nu0=float(d + 2),
            s0=0.1 * np.eye(d),
        )


def _log_gaussian(X: np.ndarray, mean: np.ndarray, cov: np.ndarray,
                  component: int) -> np.ndarray:
    """Log density of N(mean, cov) at each row of X, via Cholesky."""
    d = X.shape[1]
    try:
        chol = cholesky(cov, lower=True)
    except np.linalg.LinAlgError:
        raise SingularCovarianceError(component)
    except ValueError:
        raise SingularCovarianceError(component)
    diff = (X - mean).T
    solved = solve_triangular(chol, diff, lower=True)
    log_det = 2.0 * np.log(np.diag(chol)).sum()
    maha = (solved ** 2).sum(axis=0)
    return -0.5 * (d * np.log(2.0 * np.pi) + log_det + maha)


def _log_joint(data: BoundedDataset, params: MoGParams) -> np.ndarray:
    """Matrix of log(pi_k) + log N(x_i | mu_k, Sigma_k)."""
    X = data.rows
    K = params.n_components
    out = np.empty((data.n, K))
    with np.errstate(divide="ignore"):
        log_w = np.log(params.weights)
    for k in range(K):
        out[:, k] = log_w[k] + _log_gaussian(X, params.means[k],
                                             params.covariances[k], k)
    return out


def e_step(data: BoundedDataset, params: MoGParams) -> Responsibilities:
    """Posterior membership probabilities under the current parameters."""
    log_joint = _log_joint(data, params)
    log_norm = logsumexp(log_joint, axis=1, keepdims=True)
    gamma = np.exp(log_joint - log_norm)
    # exact row normalization; exp/logsumexp leaves ~1ulp residue
    gamma /= gamma.sum(axis=1, keepdims=True)
    return Responsibilities(gamma)


def log_likelihood(data: BoundedDataset, params: MoGParams) -> float:
    """Total mixture log-likelihood of the dataset (divide by N to report
    the per-datapoint value)."""
    log_joint = _log_joint(data, params)
    return float(logsumexp(log_joint, axis=1).sum())


def _check_counts(counts: np.ndarray, n: int) -> None:
    floor = COUNT_FLOOR_FRACTION * n
    for k, nk in enumerate(counts):
        if nk <= floor:
            raise DegenerateComponentError(k, float(nk))


def m_step_mle(data: BoundedDataset, resp: Responsibilities,
               psd_floor: float = PSD_FLOOR) -> MoGParams:
    """Weighted maximum-likelihood update of weights, means and covariances."""
    X = data.rows
    n, d = X.shape
    counts = resp.counts
    _check_counts(counts, n)
    weights = counts / n
    weights = weights / weights.sum()
    means = (resp.gamma.T @ X) / counts[:, None]
    K = counts.shape[0]
    covs = np.empty((K, d, d))
    for k in range(K):
        diff = X - means[k]
        covs[k] = (resp.gamma[:, k, None] * diff).T @ diff / counts[k]
        covs[k] = psd_project(0.5 * (covs[k] + covs[k].T), psd_floor)
    return MoGParams(weights, means, covs, psd_floor=psd_floor)


def m_step_map(data: BoundedDataset, resp: Responsibilities, prior: MapPrior,
               psd_floor: float = PSD_FLOOR) -> MoGParams:
    """Posterior-mode update under the Dirichlet/NIW prior.

    Computed from the raw weighted sums, so components with zero soft count
    fall back to the prior instead of failing.
    """
    X = data.rows
    n, d = X.shape
    counts = resp.counts
    K = counts.shape[0]
    alpha = prior.dirichlet_alpha
    weights = (counts + alpha - 1.0) / (n + alpha.sum() - K)
    weights = weights / weights.sum()
    first = resp.gamma.T @ X  # (K, d) weighted sums
    means = first / (counts + prior.kappa0)[:, None]
    covs = np.empty((K, d, d))
    for k in range(K):
        scatter = (resp.gamma[:, k, None] * X).T @ X
        shrink = np.outer(first[k], first[k]) / (prior.kappa0 + counts[k])
        num = prior.s0 + scatter - shrink
        covs[k] = num / (prior.nu0 + counts[k] + d + 2.0)
        covs[k] = psd_project(0.5 * (covs[k] + covs[k].T), psd_floor)
    return MoGParams(weights, means, covs, psd_floor=psd_floor)


def init_params(data: BoundedDataset, n_components: int, rng: np.random.Generator,
                psd_floor: float = PSD_FLOOR) -> MoGParams:
    """Seed EM: distance-weighted sampling of means, shared global covariance,
    uniform weights."""
    X = data.rows
    n, d = X.shape
    idx = int(rng.integers(n))
    centers = [X[idx]]
    for _ in range(1, n_components):
        d2 = np.min(
            [((X - c) ** 2).sum(axis=1) for c in centers], axis=0
        )
        total = d2.sum()
        if total <= 0:
            probs = np.full(n, 1.0 / n)
        else:
            probs = d2 / total
        centers.append(X[int(rng.choice(n, p=probs))])
    means = np.array(centers)
    global_cov = np.atleast_2d(np.cov(X.T)) if n > 1 else np.eye(d)
    global_cov = psd_project(0.5 * (global_cov + global_cov.T), psd_floor)
    covs = np.repeat(global_cov[None, :, :], n_components, axis=0)
    weights = np.full(n_components, 1.0 / n_components)
    return MoGParams(weights, means, covs, psd_floor=psd_floor)


def _reassign_degenerate(resp: Responsibilities, counts: np.ndarray, n: int,
                         rng: np.random.Generator) -> Responsibilities:
    """Hand one random data point wholly to each degenerate component.

    The subsequent M-step then re-seeds that component's mean at a data
    point, which keeps the component count fixed across iterations.
    """
    floor = COUNT_FLOOR_FRACTION * n
    gamma = resp.gamma
    dead = [k for k, nk in enumerate(counts) if nk <= floor]
    if not dead:
        return resp
    gamma = gamma.copy()
    # distinct donor points, so two dead components never collide
    donors = rng.choice(n, size=min(len(dead), n), replace=False)
    for k, i in zip(dead, donors):
        gamma[int(i), :] = 0.0
        gamma[int(i), k] = 1.0
    return Responsibilities(gamma)


def fit_em(data: BoundedDataset, n_components: int, iterations: int,
           estimator: str = "mle", prior: MapPrior | None = None,
           seed: int | None = None, init: MoGParams | None = None,
           psd_floor: float = PSD_FLOOR) -> MoGParams:
    """Run plain (non-private) EM for a fixed number of iterations.

    No early stopping: the iteration count is part of the contract so that
    private wrappers can compose privacy costs over exactly J steps.
    """
    if estimator not in ("mle", "map"):
        raise ValueError(f"unknown estimator {estimator!r}")
    if estimator == "map" and prior is None:
        prior = MapPrior.default(n_components, data.d)
    rng = np.random.default_rng(seed)
    params = init if init is not None else init_params(
        data, n_components, rng, psd_floor)
    for _ in range(iterations):
        resp = e_step(data, params)
        resp = _reassign_degenerate(resp, resp.counts, data.n, rng)
        if estimator == "mle":
            params = m_step_mle(data, resp, psd_floor)
        else:
            params = m_step_map(data, resp, prior, psd_floor)
    return params
