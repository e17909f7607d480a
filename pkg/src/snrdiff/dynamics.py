"""Forward/backward SDE coefficients, transition kernels, and score-model
representation changes.

The forward process ``z_t = alpha(t) x + sigma(t) eps`` solves the linear
SDE ``dz = f(t) z dt + g(t) dw`` with

    f(t) = alpha'(t) / alpha(t),
    g(t)^2 = -exp(-lambda(t)) lambda'(t) alpha(t)^2 = -lambda'(t) sigma(t)^2,

and has Gaussian transition kernels q(z_t | z_s) with mean coefficient
alpha(t)/alpha(s) and variance alpha(t)^2 [e^{-lambda(t)} - e^{-lambda(s)}].
The reverse-time dynamics form a one-parameter family: for any real rho,

    dz = (f z - (1 + rho^2)/2 g^2 score) dt + rho g dw

runs the process backward; rho = 0 is the deterministic probability flow.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import rng
from .errors import NumericalError
from .schedule import Schedule

_G2_TOL = 1e-12
SCORE_TAGS = ("score", "eps", "data")


@dataclass(frozen=True)
class DriftDiffusion:
    """Forward SDE coefficients at one time: drift factor f, diffusion g."""

    f: float
    g: float


@dataclass(frozen=True)
class TransitionKernel:
    """q(z_t | z_s) = N(mean_coeff * z_s, variance * I) for s <= t."""

    mean_coeff: float
    variance: float


def forward_coeffs(schedule: Schedule, t: float) -> DriftDiffusion:
    """Drift and diffusion of the forward SDE at time t."""
    t = float(t)
    alpha = float(schedule.alpha(t))
    sigma = float(schedule.sigma(t))
    f = float(schedule.dalpha_dt(t)) / alpha
    g2 = -float(schedule.dlambda_dt(t)) * sigma * sigma
    if g2 < -_G2_TOL * max(1.0, abs(g2)):
        raise NumericalError(
            f"negative diffusion radicand g^2={g2} at t={t}; schedule broken"
        )
    return DriftDiffusion(f=f, g=float(np.sqrt(max(g2, 0.0))))


def _exp_diff(lam_t: float, lam_s: float) -> float:
    """e^{-lam_t} - e^{-lam_s}, computed without cancellation.

    Positive whenever lam_s > lam_t (i.e. s < t on a valid schedule).
    """
    return float(np.exp(-lam_s) * np.expm1(lam_s - lam_t))


def transition(schedule: Schedule, s: float, t: float) -> TransitionKernel:
    """Transition kernel of the forward process from time s to time t >= s."""
    s, t = float(s), float(t)
    if s > t:
        raise ValueError(f"transition requires s <= t, got s={s} > t={t}")
    alpha_t = float(schedule.alpha(t))
    alpha_s = float(schedule.alpha(s))
    lam_t = float(schedule.lam(t))
    lam_s = float(schedule.lam(s))
    variance = alpha_t * alpha_t * _exp_diff(lam_t, lam_s)
    return TransitionKernel(mean_coeff=alpha_t / alpha_s,
                            variance=max(variance, 0.0))


class ScoreModel:
    """A function (z, t) -> array tagged by what it predicts.

    Tags: ``"score"`` for the score s(z, t), ``"eps"`` for noise prediction,
    ``"data"`` for the denoiser x_hat.  The three are interchangeable given
    the schedule:

        score = -eps / sigma(t),      x_hat = (z + sigma(t)^2 score) / alpha(t).

    Instances are stateless wrappers; the underlying callable must be safe
    to call concurrently.
    """

    def __init__(self, fn: Callable[[np.ndarray, float], np.ndarray], tag: str):
        if tag not in SCORE_TAGS:
            raise ValueError(f"unknown score-model tag {tag!r}; "
                             f"expected one of {SCORE_TAGS}")
        self.fn = fn
        self.tag = tag

    def __call__(self, z, t):
        return np.asarray(self.fn(z, float(t)), dtype=float)

    def score(self, schedule: Schedule, z, t) -> np.ndarray:
        """Evaluate as a score regardless of the native tag."""
        z = np.asarray(z, dtype=float)
        out = self(z, t)
        if self.tag == "score":
            return out
        sigma = float(schedule.sigma(t))
        if self.tag == "eps":
            return -out / sigma
        alpha = float(schedule.alpha(t))
        # data tag: invert x_hat = (z + sigma^2 score)/alpha
        return (alpha * out - z) / (sigma * sigma)

    def eps(self, schedule: Schedule, z, t) -> np.ndarray:
        """Evaluate as a noise prediction regardless of the native tag."""
        if self.tag == "eps":
            return self(z, t)
        return -float(schedule.sigma(t)) * self.score(schedule, z, t)

    def data(self, schedule: Schedule, z, t) -> np.ndarray:
        """Evaluate as a denoiser x_hat regardless of the native tag."""
        if self.tag == "data":
            return self(z, t)
        z = np.asarray(z, dtype=float)
        sigma = float(schedule.sigma(t))
        alpha = float(schedule.alpha(t))
        return (z + sigma * sigma * self.score(schedule, z, t)) / alpha


def convert_score_model(model: ScoreModel, target_tag: str,
                        schedule: Schedule) -> ScoreModel:
    """Wrap a model so it natively returns the target quantity."""
    if target_tag not in SCORE_TAGS:
        raise ValueError(f"unknown score-model tag {target_tag!r}")
    if target_tag == model.tag:
        return model
    method = {"score": ScoreModel.score, "eps": ScoreModel.eps,
              "data": ScoreModel.data}[target_tag]
    return ScoreModel(lambda z, t: method(model, schedule, z, t), target_tag)


def backward_drift(schedule: Schedule, score_model: ScoreModel, rho: float,
                   z, t: float) -> np.ndarray:
    """Drift of the reverse SDE family at (z, t).

    Returns f(t) z - ((1 + rho^2)/2) g(t)^2 score(z, t); the matching
    diffusion magnitude is rho * g(t) from :func:`forward_coeffs`.
    """
    z = np.asarray(z, dtype=float)
    coeffs = forward_coeffs(schedule, t)
    score = score_model.score(schedule, z, t)
    return coeffs.f * z - 0.5 * (1.0 + rho * rho) * coeffs.g ** 2 * score


def euler_maruyama_forward(
    schedule: Schedule,
    z0,
    steps: int,
    seed: int,
    n_paths: int = 1,
    zero_noise: bool = False,
    return_path: bool = False,
):
    """Simulate the forward SDE on a uniform time grid over the window.

    ``z0`` broadcasts to (n_paths, D).  Noise comes from a counter-based
    stream keyed by the seed, one (n_paths, D) block per step, so runs are
    deterministic given the seed.  ``zero_noise=True`` suppresses the
    diffusion term (test hook for isolating drift behaviour).

    Returns the final state (n_paths, D), or (times, path) with path of
    shape (steps + 1, n_paths, D) when ``return_path`` is set.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    z = np.asarray(z0, dtype=float)
    if z.ndim == 0:
        z = z[None]
    if z.ndim == 1:
        z = np.broadcast_to(z, (n_paths, z.shape[0])).copy()
    if z.shape[0] != n_paths:
        raise ValueError("z0 leading dimension must match n_paths")

    times = np.linspace(schedule.t_min, schedule.t_max, steps + 1)
    gen = rng.stream(seed, rng.PURPOSE_FORWARD)
    path = [z.copy()] if return_path else None
    for k in range(steps):
        t = float(times[k])
        dt = float(times[k + 1] - times[k])
        coeffs = forward_coeffs(schedule, t)
        z = z + coeffs.f * z * dt
        if not zero_noise:
            z = z + coeffs.g * np.sqrt(dt) * gen.standard_normal(z.shape)
        if return_path:
            path.append(z.copy())
    if return_path:
        return times, np.stack(path)
    return z


def path_to_csv_rows(times: np.ndarray, path: np.ndarray):
    """Yield (step, t, z_0..z_{D-1}) rows for a single simulated path."""
    for k, t in enumerate(times):
        yield (k, float(t), *path[k].ravel().tolist())
