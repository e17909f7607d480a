"""Backward-time samplers.

All steppers move a state from time ``t`` to an earlier time ``s`` using a
score model.  The workhorse is :func:`step_generalized`, the exponential
integrator

    z_s = (alpha_s/alpha_t) z_t
          - (1+rho^2)/(1+gamma) alpha_s
            [e^{-(1+gamma) lam_t / 2} - e^{-(1+gamma) lam_s / 2}]
            e^{gamma lam_t / 2} eps_hat(z_t, t)
          + rho alpha_t sqrt(e^{-lam_t} - e^{-lam_s})
            (alpha_s/alpha_t)^{1-delta} (sigma_s/sigma_t)^delta eps,

whose special cases are the ancestral-style step (:func:`step_kingma`,
rho = gamma = delta = 1) and the deterministic exponential-integrator step
(rho = 0, any gamma).  :func:`step_euler_backward` is the plain
Euler-Maruyama discretization of the reverse SDE, kept as a first-order
baseline, and :func:`step_non_markovian` is the DDIM-style update through
the predicted clean sample with per-step noise scale eta.

Steppers take the noise draw either as an explicit standard-normal array
``eps`` or draw it from a ``numpy.random.Generator``; with a fixed draw
they are pure functions.  :func:`sample` runs full backward passes with
counter-based per-(trajectory, step) noise so results do not depend on
how trajectories are batched or threaded.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from . import rng
from .dynamics import ScoreModel, _exp_diff, backward_drift, forward_coeffs
from .errors import ConfigError, NumericalError
from .schedule import Schedule
from .snr_space import t_of_lambda

SAMPLER_KINDS = ("generalized", "kingma", "non_markovian",
                 "euler_backward", "exact_reference")
GRID_KINDS = ("uniform_t", "uniform_lambda")

# Test hook: flip the sign of the eps-hat coefficient in step_generalized.
# Used by mutation tests to confirm which verification checks catch it.
_MUTATE_FLIP_EPS_BRACKET = False


def _draw(shape, eps, gen) -> np.ndarray:
    if eps is not None:
        eps = np.asarray(eps, dtype=float)
        if eps.shape != shape:
            eps = np.broadcast_to(eps, shape)
        return eps
    if gen is not None:
        return gen.standard_normal(shape)
    raise ValueError("stochastic step needs either eps or rng")


def _check_times(schedule: Schedule, s: float, t: float) -> None:
    if s > t:
        raise ValueError(f"backward step requires s <= t, got s={s} > t={t}")
    schedule._check_t(np.array([s, t]))


def step_generalized(schedule: Schedule, score: ScoreModel, z_t, t: float,
                     s: float, rho: float, gamma: float, delta: float,
                     rng=None, eps=None) -> np.ndarray:
    """One generalized backward step from t to s (see module docstring).

    The eps-hat prediction is evaluated at (z_t, t).  With s = t the step
    is the identity.  gamma = -1 is rejected (the 1/(1+gamma) prefactor);
    delta may be any real but negative values are flagged.
    """
    t, s = float(t), float(s)
    rho, gamma, delta = float(rho), float(gamma), float(delta)
    _check_times(schedule, s, t)
    if gamma == -1.0:
        raise ValueError("gamma = -1 is excluded (division by 1 + gamma)")
    if delta < 0.0:
        warnings.warn("delta < 0 is outside the intended range; proceeding",
                      RuntimeWarning)
    z = np.asarray(z_t, dtype=float)
    if s == t:
        return z.copy()

    alpha_t, alpha_s = float(schedule.alpha(t)), float(schedule.alpha(s))
    sigma_t, sigma_s = float(schedule.sigma(t)), float(schedule.sigma(s))
    lam_t, lam_s = float(schedule.lam(t)), float(schedule.lam(s))

    nu = 0.5 * (1.0 + gamma)
    bracket = np.exp(-nu * lam_s) * np.expm1(nu * (lam_s - lam_t))
    coef = (1.0 + rho * rho) / (1.0 + gamma)
    eps_hat = score.eps(schedule, z, t)
    sign = 1.0 if _MUTATE_FLIP_EPS_BRACKET else -1.0
    out = (alpha_s / alpha_t) * z \
        + sign * coef * alpha_s * bracket * np.exp(0.5 * gamma * lam_t) * eps_hat

    if rho != 0.0:
        noise_coef = (rho * alpha_t * np.sqrt(_exp_diff(lam_t, lam_s))
                      * (alpha_s / alpha_t) ** (1.0 - delta)
                      * (sigma_s / sigma_t) ** delta)
        out = out + noise_coef * _draw(z.shape, eps, rng)
    return out


def step_kingma(schedule: Schedule, score: ScoreModel, z_t, t: float,
                s: float, rng=None, eps=None) -> np.ndarray:
    """Ancestral-style backward step: posterior mean plus matched noise.

    Mean (alpha_s/alpha_t) z_t + alpha_s alpha_t (e^{-lam_t} - e^{-lam_s})
    score(z_t, t), noise std alpha_t sqrt(e^{-lam_t} - e^{-lam_s})
    sigma_s / sigma_t — written in eps-hat form below.  Coincides with
    step_generalized at rho = gamma = delta = 1 (kept as an independent
    transcription so the equality is a real cross-check).
    """
    t, s = float(t), float(s)
    _check_times(schedule, s, t)
    z = np.asarray(z_t, dtype=float)
    if s == t:
        return z.copy()

    alpha_t, alpha_s = float(schedule.alpha(t)), float(schedule.alpha(s))
    sigma_t, sigma_s = float(schedule.sigma(t)), float(schedule.sigma(s))
    lam_t, lam_s = float(schedule.lam(t)), float(schedule.lam(s))

    bracket = np.exp(-lam_s) * np.expm1(lam_s - lam_t)
    eps_hat = score.eps(schedule, z, t)
    mean = (alpha_s / alpha_t) * z \
        - alpha_s * bracket * np.exp(0.5 * lam_t) * eps_hat
    noise_coef = alpha_t * np.sqrt(bracket) * (sigma_s / sigma_t)
    return mean + noise_coef * _draw(z.shape, eps, rng)


def non_markovian_beta2(schedule: Schedule, s: float, t: float,
                        eta: float) -> float:
    """Per-step noise variance beta^2(s, t) = eta^2 (sigma_t^2 - sigma_s^2),
    clamped into [0, (1 - 1e-9) sigma_s^2]."""
    sigma_t2 = float(schedule.sigma(t)) ** 2
    sigma_s2 = float(schedule.sigma(s)) ** 2
    beta2 = float(eta) ** 2 * (sigma_t2 - sigma_s2)
    return min(max(beta2, 0.0), (1.0 - 1e-9) * sigma_s2)


def step_non_markovian(schedule: Schedule, score: ScoreModel, z_t, t: float,
                       s: float, eta: float, rng=None, eps=None) -> np.ndarray:
    """DDIM-style backward step through the predicted clean sample.

    z_s = alpha_s x_hat + sqrt(sigma_s^2 - beta^2) (z_t - alpha_t x_hat)/sigma_t
          + beta eps, with x_hat = (z_t - sigma_t eps_hat)/alpha_t.
    eta = 0 gives the deterministic step; eta = 1 injects the largest noise
    the marginal-preserving family allows for this beta parameterization.
    """
    t, s = float(t), float(s)
    _check_times(schedule, s, t)
    z = np.asarray(z_t, dtype=float)
    if s == t:
        return z.copy()

    alpha_t, alpha_s = float(schedule.alpha(t)), float(schedule.alpha(s))
    sigma_t, sigma_s2 = float(schedule.sigma(t)), float(schedule.sigma(s)) ** 2
    beta2 = non_markovian_beta2(schedule, s, t, eta)
    x_hat = score.data(schedule, z, t)
    out = alpha_s * x_hat \
        + np.sqrt(sigma_s2 - beta2) * (z - alpha_t * x_hat) / sigma_t
    if beta2 > 0.0:
        out = out + np.sqrt(beta2) * _draw(z.shape, eps, rng)
    return out


def step_euler_backward(schedule: Schedule, score: ScoreModel, z_t, t: float,
                        s: float, rho: float, rng=None, eps=None) -> np.ndarray:
    """One Euler-Maruyama step of the reverse SDE from t to s."""
    t, s = float(t), float(s)
    rho = float(rho)
    _check_times(schedule, s, t)
    z = np.asarray(z_t, dtype=float)
    if s == t:
        return z.copy()
    out = z + backward_drift(schedule, score, rho, z, t) * (s - t)
    if rho != 0.0:
        g = forward_coeffs(schedule, t).g
        out = out + rho * g * np.sqrt(t - s) * _draw(z.shape, eps, rng)
    return out


def exact_reference(schedule: Schedule, score: ScoreModel, z_t, t: float,
                    s: float, substeps: int, rng=None, rho: float = 0.0,
                    gamma: float = 0.0, delta: float = 1.0) -> np.ndarray:
    """Resolve the t -> s transition by ``substeps`` generalized sub-steps.

    As substeps grows this converges to the exact backward solution
    (pointwise for rho = 0, in distribution otherwise) and serves as the
    error yardstick for single big steps.  substeps = 1 reproduces
    step_generalized on the same draw.
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    ts = np.linspace(float(t), float(s), int(substeps) + 1)
    z = np.asarray(z_t, dtype=float)
    for j in range(int(substeps)):
        z = step_generalized(schedule, score, z, float(ts[j]), float(ts[j + 1]),
                             rho, gamma, delta, rng=rng)
    return z


def make_time_grid(schedule: Schedule, grid_kind: str, steps: int,
                   t_start: float, t_end: float) -> np.ndarray:
    """Decreasing time grid with steps+1 nodes from t_start down to t_end.

    ``uniform_t`` spaces nodes evenly in t; ``uniform_lambda`` spaces them
    evenly in lambda (equidistributing the per-step SNR change) and maps
    back through the lambda inverse.  Endpoints are exact.
    """
    if grid_kind not in GRID_KINDS:
        raise ConfigError(f"unknown grid kind {grid_kind!r}")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    t_start, t_end = float(t_start), float(t_end)
    if t_end >= t_start:
        raise ValueError("need t_end < t_start for a backward grid")
    schedule._check_t(np.array([t_end, t_start]))
    if grid_kind == "uniform_t":
        grid = np.linspace(t_start, t_end, steps + 1)
    else:
        lams = np.linspace(float(schedule.lam(t_start)),
                           float(schedule.lam(t_end)), steps + 1)
        grid = np.array([t_of_lambda(schedule, lam) for lam in lams])
        grid[0], grid[-1] = t_start, t_end
    if not np.all(np.diff(grid) < 0.0):
        raise NumericalError("time grid is not strictly decreasing")
    return grid


@dataclass(frozen=True)
class SamplerConfig:
    """Everything defining one backward run.

    ``t_start``/``t_end`` default to the schedule window at run time.
    ``substeps`` only matters for kind="exact_reference" (sub-steps per
    grid interval).
    """

    kind: str = "generalized"
    rho: float = 1.0
    gamma: float = 1.0
    delta: float = 1.0
    eta: float = 0.0
    steps: int = 100
    grid_kind: str = "uniform_lambda"
    t_start: float | None = None
    t_end: float | None = None
    seed: int = 0
    substeps: int = 16

    def __post_init__(self):
        if self.kind not in SAMPLER_KINDS:
            raise ConfigError(f"unknown sampler kind {self.kind!r}; "
                              f"expected one of {SAMPLER_KINDS}")
        if self.grid_kind not in GRID_KINDS:
            raise ConfigError(f"unknown grid kind {self.grid_kind!r}")
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if self.kind == "generalized" and self.gamma == -1.0:
            raise ConfigError("gamma = -1 is excluded for the generalized step")
        if not (0.0 <= self.eta <= 1.0):
            raise ConfigError("eta must lie in [0, 1]")
        if self.substeps < 1:
            raise ConfigError("substeps must be >= 1")
        if (self.t_start is not None and self.t_end is not None
                and self.t_end > self.t_start):
            raise ConfigError("need t_end <= t_start")

    def to_dict(self) -> dict:
        return asdict(self)


def sampler_config_from_dict(spec: dict) -> SamplerConfig:
    if not isinstance(spec, dict):
        raise ConfigError("sampler spec must be a JSON object")
    known = set(SamplerConfig.__dataclass_fields__)
    unknown = set(spec) - known
    if unknown:
        raise ConfigError(f"unknown sampler config fields {sorted(unknown)}")
    try:
        return SamplerConfig(**spec)
    except TypeError as exc:
        raise ConfigError(f"bad sampler config: {exc}") from exc


@dataclass
class Trajectory:
    """One sample's backward path: decreasing times, states, noise draws."""

    times: np.ndarray
    states: np.ndarray          # (len(times), D)
    noises: np.ndarray | None   # (len(times) - 1, D) standard-normal draws


def _make_stepper(schedule: Schedule, score: ScoreModel, config: SamplerConfig):
    """Bind config to a (z, t, s, eps) -> z_s step and report noise usage."""
    kind = config.kind
    if kind == "generalized":
        stochastic = config.rho != 0.0

        def step(z, t, s, eps):
            return step_generalized(schedule, score, z, t, s, config.rho,
                                    config.gamma, config.delta, eps=eps)
    elif kind == "kingma":
        stochastic = True

        def step(z, t, s, eps):
            return step_kingma(schedule, score, z, t, s, eps=eps)
    elif kind == "non_markovian":
        stochastic = config.eta != 0.0

        def step(z, t, s, eps):
            return step_non_markovian(schedule, score, z, t, s, config.eta,
                                      eps=eps)
    elif kind == "euler_backward":
        stochastic = config.rho != 0.0

        def step(z, t, s, eps):
            return step_euler_backward(schedule, score, z, t, s, config.rho,
                                       eps=eps)
    else:  # exact_reference: eps is addressed per sub-step by the caller
        stochastic = config.rho != 0.0
        step = None
    return step, stochastic


def sample(schedule: Schedule, score: ScoreModel, config: SamplerConfig,
           n: int, d: int, threads: int = 1,
           return_trajectories: bool = False):
    """Run the configured backward pass for n trajectories of dimension d.

    The prior is z ~ N(0, sigma(t_start)^2 I).  Noise is addressed by
    (seed, purpose, step, trajectory row), so the returned samples are a
    pure function of (config, n, d) regardless of ``threads`` or any other
    batching.  Raises NumericalError if a trajectory goes non-finite.

    Returns (n, d) samples, plus a list of per-sample Trajectory records
    when ``return_trajectories`` is set.
    """
    if n < 1 or d < 1:
        raise ValueError("need n >= 1 and d >= 1")
    t_start = schedule.t_max if config.t_start is None else float(config.t_start)
    t_end = schedule.t_min if config.t_end is None else float(config.t_end)
    schedule._check_t(np.array([t_end, t_start]))
    if t_end > t_start:
        raise ConfigError("need t_end <= t_start")
    seed = int(config.seed)

    sigma_start = float(schedule.sigma(t_start))
    if t_end == t_start:
        grid = np.array([t_start])
    else:
        grid = make_time_grid(schedule, config.grid_kind, config.steps,
                              t_start, t_end)
    n_steps = len(grid) - 1

    step, stochastic = _make_stepper(schedule, score, config)
    is_reference = config.kind == "exact_reference"

    states = np.empty((n_steps + 1, n, d)) if return_trajectories else None
    # per-grid-step draws; reference runs consume several per interval and
    # record none
    noises = (np.empty((n_steps, n, d))
              if return_trajectories and stochastic and not is_reference
              else None)
    out = np.empty((n, d))

    def run_rows(row_start: int, row_stop: int) -> None:
        z = sigma_start * rng.row_normals(seed, rng.PURPOSE_PRIOR, 0,
                                          row_start, row_stop, d)
        if return_trajectories:
            states[0, row_start:row_stop] = z
        for k in range(n_steps):
            t, s = float(grid[k]), float(grid[k + 1])
            if is_reference:
                sub = np.linspace(t, s, config.substeps + 1)
                for j in range(config.substeps):
                    eps = None
                    if stochastic:
                        eps = rng.row_normals(seed, rng.PURPOSE_STEP,
                                              k * config.substeps + j,
                                              row_start, row_stop, d)
                    z = step_generalized(schedule, score, z, float(sub[j]),
                                         float(sub[j + 1]), config.rho,
                                         config.gamma, config.delta, eps=eps)
            else:
                eps = None
                if stochastic:
                    eps = rng.row_normals(seed, rng.PURPOSE_STEP, k,
                                          row_start, row_stop, d)
                    if noises is not None:
                        noises[k, row_start:row_stop] = eps
                z = step(z, t, s, eps)
            if not np.all(np.isfinite(z)):
                raise NumericalError(
                    f"non-finite state at step {k} (t={t} -> s={s})"
                )
            if return_trajectories:
                states[k + 1, row_start:row_stop] = z
        out[row_start:row_stop] = z

    threads = max(1, int(threads))
    if threads == 1 or n < 2 * threads:
        run_rows(0, n)
    else:
        bounds = np.linspace(0, n, threads + 1).astype(int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(run_rows, int(a), int(b))
                       for a, b in zip(bounds[:-1], bounds[1:])
                       if b > a]
            for fut in futures:
                fut.result()

    if not return_trajectories:
        return out
    trajectories = [
        Trajectory(times=grid.copy(), states=states[:, i, :].copy(),
                   noises=None if noises is None else noises[:, i, :].copy())
        for i in range(n)
    ]
    return out, trajectories
