"""Full-covariance Gaussian mixtures fitted by EM, with BIC order selection."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

REG_COVAR = 1e-6
TOL = 1e-6
MAX_ITER = 200


@dataclass
class GmmModel:
    k: int
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    log_likelihood: float
    n_points: int
    converged: bool = True
    n_iter: int = 0
    history: list[float] = field(default_factory=list)

    @property
    def n_parameters(self) -> int:
        d = self.means.shape[1]
        return (self.k - 1) + self.k * d + self.k * d * (d + 1) // 2

    @property
    def bic(self) -> float:
        return -2.0 * self.log_likelihood + self.n_parameters * np.log(self.n_points)

    @property
    def aic(self) -> float:
        return -2.0 * self.log_likelihood + 2 * self.n_parameters

    def log_resp(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-point log responsibilities and per-point log densities."""
        lp = _weighted_log_prob(x, self.weights, self.means, self.covariances)
        norm = logsumexp(lp, axis=1)
        return lp - norm[:, None], norm

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Index of the maximum-responsibility component (lowest index on ties)."""
        lr, _ = self.log_resp(np.asarray(x, float))
        return np.argmax(lr, axis=1)


def _weighted_log_prob(x, weights, means, covs) -> np.ndarray:
    n, d = x.shape
    out = np.empty((n, len(weights)))
    for j in range(len(weights)):
        chol = np.linalg.cholesky(covs[j])
        diff = np.linalg.solve(chol, (x - means[j]).T)
        maha = np.einsum("ij,ij->j", diff, diff)
        logdet = 2.0 * np.log(np.diag(chol)).sum()
        with np.errstate(divide="ignore"):
            lw = np.log(weights[j])
        out[:, j] = lw - 0.5 * (d * np.log(2 * np.pi) + logdet + maha)
    return out


def _m_step(x, resp, reg, w):
    n, d = x.shape
    resp = resp * w[:, None]
    nk = resp.sum(axis=0) + 10 * np.finfo(float).eps
    weights = nk / nk.sum()
    means = (resp.T @ x) / nk[:, None]
    covs = np.empty((len(nk), d, d))
    for j in range(len(nk)):
        diff = x - means[j]
        covs[j] = (resp[:, j, None] * diff).T @ diff / nk[j]
        covs[j].flat[:: d + 1] += reg
    return weights, means, covs


def kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: indices of ``k`` points chosen with D^2 weighting."""
    n = len(x)
    idx = [int(rng.integers(n))]
    d2 = ((x - x[idx[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            nxt = int(rng.integers(n))
        else:
            nxt = int(rng.choice(n, p=d2 / total))
        idx.append(nxt)
        d2 = np.minimum(d2, ((x - x[nxt]) ** 2).sum(axis=1))
    return np.array(idx)


def _sample_weights(weights, n) -> np.ndarray:
    if weights is None:
        return np.ones(n)
    w = np.asarray(weights, dtype=np.float64).ravel()
    if w.shape != (n,) or np.any(w < 0) or not w.sum() > 0:
        raise ValueError("weights must be nonnegative, one per point, and not all zero")
    # rescale to mean 1 so the BIC sample size stays the point count
    return w * (n / w.sum())


def fit_gmm(x: np.ndarray, k: int, seed: int = 0, weights: np.ndarray | None = None,
            reg: float = REG_COVAR, tol: float = TOL, max_iter: int = MAX_ITER) -> GmmModel:
    """Fit a ``k``-component mixture to the rows of ``x`` by EM.

    ``weights`` gives each point a multiplicity (e.g. voxel intensity).
    Stops when the relative change in total log-likelihood drops below
    ``tol``; ``converged`` is False if ``max_iter`` is reached first.
    """
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    if n < 1:
        raise ValueError("cannot fit a mixture to zero points")
    w = _sample_weights(weights, n)
    k = min(k, n)
    rng = np.random.default_rng(seed)
    centers = x[kmeans_pp(x, k, rng)]
    d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    resp = np.zeros((n, k))
    resp[np.arange(n), np.argmin(d2, axis=1)] = 1.0
    weights, means, covs = _m_step(x, resp, reg, w)

    history: list[float] = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        lp = _weighted_log_prob(x, weights, means, covs)
        norm = logsumexp(lp, axis=1)
        ll = float(w @ norm)
        history.append(ll)
        if len(history) > 1 and abs(ll - history[-2]) <= tol * abs(history[-2]):
            converged = True
            break
        resp = np.exp(lp - norm[:, None])
        weights, means, covs = _m_step(x, resp, reg, w)
    return GmmModel(k, weights, means, covs, history[-1], n, converged, it, history)


def select_gmm(x: np.ndarray, k_max: int = 4, seed: int = 0, **kw) -> tuple[GmmModel, list[GmmModel], list[str]]:
    """Fit k = 1..k_max and keep the converged model with the lowest BIC.

    Returns (best, all fits, warnings). Ties go to the smaller k.
    """
    fits, notes = [], []
    best = None
    for k in range(1, k_max + 1):
        if k > len(x):
            break
        m = fit_gmm(x, k, seed=seed, **kw)
        fits.append(m)
        if not m.converged:
            notes.append(f"EM for k={k} did not converge in {m.n_iter} iterations; candidate dropped")
            continue
        if best is None or m.bic < best.bic:
            best = m
    if best is None:
        best = fits[0]
    return best, fits, notes
