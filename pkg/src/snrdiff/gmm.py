"""Gaussian mixtures with closed-form noisy marginals, scores, and
posterior means.

A mixture plays the role of the data distribution in verification runs:
pushing it through the forward channel ``z_t = alpha(t) x + sigma(t) eps``
keeps it a mixture with known parameters, so the score of the noisy
marginal and the denoising posterior mean E[x | z_t] are available exactly
and can stand in for a trained network.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import logsumexp

from . import rng
from .errors import ConfigError
from .schedule import Schedule

COV_FLOOR = 1e-12
_FULL_COV_MAX_DIM = 16


@dataclass(frozen=True)
class GmmSpec:
    """A Gaussian mixture: weights (K,), means (K, D), covs (K, D, D).

    Weights must sum to one; covariances must be symmetric PSD.  Full
    (non-diagonal) covariances are supported up to D = 16.
    """

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    dim: int = field(init=False)

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        m = np.atleast_2d(np.asarray(self.means, dtype=float))
        c = np.asarray(self.covs, dtype=float)
        if c.ndim == 2 and m.shape[0] == 1:
            c = c[None]
        if c.ndim != 3:
            raise ConfigError("covs must be a (K, D, D) array")
        k, d = m.shape
        if w.shape != (k,) or c.shape != (k, d, d):
            raise ConfigError(
                f"inconsistent mixture shapes: weights {w.shape}, "
                f"means {m.shape}, covs {c.shape}"
            )
        if np.any(w <= 0.0):
            raise ConfigError("mixture weights must be positive")
        total = float(w.sum())
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"mixture weights sum to {total}, not 1")
        w = w / total
        for i in range(k):
            if not np.allclose(c[i], c[i].T, atol=1e-10):
                raise ConfigError(f"cov {i} is not symmetric")
            c[i] = 0.5 * (c[i] + c[i].T)
            if np.linalg.eigvalsh(c[i]).min() < -1e-10:
                raise ConfigError(f"cov {i} is not PSD")
        if d > _FULL_COV_MAX_DIM:
            off = c - c * np.eye(d)[None]
            if np.any(off != 0.0):
                raise ConfigError(
                    f"full covariances are limited to D <= {_FULL_COV_MAX_DIM}; "
                    "use diagonal covariances for larger D"
                )
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "covs", c)
        object.__setattr__(self, "dim", d)

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    def mean(self) -> np.ndarray:
        """Mixture mean."""
        return self.weights @ self.means

    def cov(self) -> np.ndarray:
        """Mixture covariance (law of total covariance)."""
        mu = self.mean()
        total = np.einsum("k,kij->ij", self.weights, self.covs)
        centered = self.means - mu
        total += np.einsum("k,ki,kj->ij", self.weights, centered, centered)
        return total

    def to_dict(self) -> dict:
        return {
            "dim": int(self.dim),
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covs": self.covs.tolist(),
        }


def gmm_from_dict(spec: dict) -> GmmSpec:
    """Build a GmmSpec from its JSON form.

    Covariances may be given as full (D, D) matrices or as length-D
    diagonal vectors.
    """
    if not isinstance(spec, dict):
        raise ConfigError("gmm spec must be a JSON object")
    try:
        weights = spec["weights"]
        means = spec["means"]
        covs_in = spec["covs"]
    except KeyError as exc:
        raise ConfigError(f"gmm spec missing field {exc}") from exc
    covs = []
    for c in covs_in:
        c = np.asarray(c, dtype=float)
        covs.append(np.diag(c) if c.ndim == 1 else c)
    gmm = GmmSpec(np.asarray(weights, float), np.asarray(means, float),
                  np.asarray(covs, float))
    if "dim" in spec and int(spec["dim"]) != gmm.dim:
        raise ConfigError(
            f"gmm spec declares dim={spec['dim']} but means have D={gmm.dim}"
        )
    return gmm


def single_gaussian(mean, cov) -> GmmSpec:
    """Convenience constructor for a one-component mixture."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.asarray(cov, dtype=float)
    if cov.ndim == 0:
        cov = cov * np.eye(mean.size)
    elif cov.ndim == 1:
        cov = np.diag(cov)
    return GmmSpec(np.array([1.0]), mean[None], cov[None])


def sample_data(gmm: GmmSpec, n: int, seed: int) -> np.ndarray:
    """Draw n i.i.d. samples, deterministically given the seed.

    Component indices come first from the stream, then one standard-normal
    vector per sample, so the output is independent of any batching.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    g = rng.stream(seed, rng.PURPOSE_DATA)
    u = g.random(n)
    comp = np.searchsorted(np.cumsum(gmm.weights), u, side="right")
    comp = np.minimum(comp, gmm.n_components - 1)
    eps = g.standard_normal((n, gmm.dim))
    chols = np.stack([
        np.linalg.cholesky(gmm.covs[k] + COV_FLOOR * np.eye(gmm.dim))
        for k in range(gmm.n_components)
    ])
    return gmm.means[comp] + np.einsum("nij,nj->ni", chols[comp], eps)


def marginal_at(gmm: GmmSpec, schedule: Schedule, t: float) -> GmmSpec:
    """Exact law of z_t = alpha(t) x + sigma(t) eps for x ~ gmm.

    Component weights are preserved; means scale by alpha and covariances
    become alpha^2 Sigma_k + sigma^2 I.
    """
    a = float(schedule.alpha(t))
    s2 = float(schedule.sigma(t)) ** 2
    eye = np.eye(gmm.dim)
    return GmmSpec(
        gmm.weights.copy(),
        a * gmm.means,
        a * a * gmm.covs + s2 * eye[None],
    )


def _noisy_factors(gmm: GmmSpec, a: float, s2: float):
    """Cholesky factors and log-normalizers of the noisy components."""
    d = gmm.dim
    eye = np.eye(d)
    factors, logdets = [], []
    for k in range(gmm.n_components):
        c = a * a * gmm.covs[k] + s2 * eye
        try:
            cf = cho_factor(c, lower=True)
        except np.linalg.LinAlgError:
            warnings.warn(
                "noisy component covariance numerically singular; "
                f"regularizing with {COV_FLOOR:g}*I",
                RuntimeWarning,
            )
            cf = cho_factor(c + COV_FLOOR * eye, lower=True)
        factors.append(cf)
        logdets.append(2.0 * np.log(np.diag(cf[0])).sum())
    return factors, np.asarray(logdets)


def _responsibilities(gmm: GmmSpec, a: float, z: np.ndarray, factors, logdets):
    """Posterior component probabilities r_k(z) under the noisy mixture.

    Returns (r, solved) with r of shape (K, N) and solved[k] = C_k^{-1}(z - m_k)
    of shape (N, D).
    """
    d = gmm.dim
    n = z.shape[0]
    logp = np.empty((gmm.n_components, n))
    solved = np.empty((gmm.n_components, n, d))
    for k in range(gmm.n_components):
        diff = z - a * gmm.means[k]
        sol = cho_solve(factors[k], diff.T).T
        solved[k] = sol
        quad = np.einsum("nd,nd->n", diff, sol)
        logp[k] = (np.log(gmm.weights[k]) - 0.5 * quad
                   - 0.5 * logdets[k] - 0.5 * d * np.log(2.0 * np.pi))
    r = np.exp(logp - logsumexp(logp, axis=0, keepdims=True))
    return r, logp, solved


def _flatten(z, d):
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != d:
        raise ValueError(f"z has last dimension {z.shape[-1]}, expected {d}")
    lead = z.shape[:-1]
    return z.reshape(-1, d), lead


def log_marginal_density(gmm: GmmSpec, schedule: Schedule, t: float, z) -> np.ndarray:
    """log p(z_t) of the noisy mixture; z may be (..., D)."""
    a = float(schedule.alpha(t))
    s2 = float(schedule.sigma(t)) ** 2
    zf, lead = _flatten(z, gmm.dim)
    factors, logdets = _noisy_factors(gmm, a, s2)
    _, logp, _ = _responsibilities(gmm, a, zf, factors, logdets)
    return logsumexp(logp, axis=0).reshape(lead)


def exact_score(gmm: GmmSpec, schedule: Schedule, t: float, z) -> np.ndarray:
    """Exact gradient of log p(z_t) at z; z may be (..., D)."""
    a = float(schedule.alpha(t))
    s2 = float(schedule.sigma(t)) ** 2
    zf, lead = _flatten(z, gmm.dim)
    factors, logdets = _noisy_factors(gmm, a, s2)
    r, _, solved = _responsibilities(gmm, a, zf, factors, logdets)
    # score = sum_k r_k C_k^{-1}(m_k - z)
    score = -np.einsum("kn,knd->nd", r, solved)
    return score.reshape(lead + (gmm.dim,))


def posterior_mean(gmm: GmmSpec, schedule: Schedule, t: float, z) -> np.ndarray:
    """Exact denoiser E[x | z_t = z]; z may be (..., D)."""
    a = float(schedule.alpha(t))
    s2 = float(schedule.sigma(t)) ** 2
    zf, lead = _flatten(z, gmm.dim)
    factors, logdets = _noisy_factors(gmm, a, s2)
    r, _, solved = _responsibilities(gmm, a, zf, factors, logdets)
    # per-component linear-Gaussian posterior: mu_k + a Sigma_k C_k^{-1}(z - a mu_k)
    out = np.zeros_like(zf)
    for k in range(gmm.n_components):
        comp_mean = gmm.means[k] + a * solved[k] @ gmm.covs[k].T
        out += r[k, :, None] * comp_mean
    return out.reshape(lead + (gmm.dim,))


def oracle_score_model(gmm: GmmSpec, schedule: Schedule):
    """The exact score of the noisy mixture, wrapped as a ScoreModel."""
    from .dynamics import ScoreModel

    def fn(z, t):
        return exact_score(gmm, schedule, float(t), z)

    return ScoreModel(fn, "score")
