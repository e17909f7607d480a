"""Schedules in signal-to-noise (lambda) space.

Because lambda(t) is strictly decreasing it can be inverted, and any
schedule induces

    tilde_alpha(lambda) = alpha(t(lambda)),
    tilde_sigma(lambda) = sigma(t(lambda)) = tilde_alpha(lambda) e^{-lambda/2},

with lambda-derivatives obtained by the chain rule.  Two schedules whose
windows map to the same lambda range and whose tilde_alpha curves agree
induce the same lambda-space forward process; :func:`equivalence_check`
certifies this numerically, and :func:`time_warp` constructs equivalent
pairs by monotone reparameterization of time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError
from .schedule import Schedule

_BISECT_CAP = 200


@dataclass
class SnrPoint:
    """tilde_alpha / tilde_sigma and their lambda-derivatives at one lambda."""

    lam: float
    tilde_alpha: float
    tilde_sigma: float
    dtilde_alpha_dlambda: float
    dtilde_sigma_dlambda: float


def t_of_lambda(schedule: Schedule, lam: float) -> float:
    """Invert lambda(t) = lam on the schedule window.

    Monotone bisection brackets the root, then Newton steps (using the
    analytic dlambda/dt) polish it.  The residual is driven to roughly
    1e-14 max(1, |lam|), comfortably inside the contractual bound of
    1e-12 max(1, |lam|).
    """
    lam = float(lam)
    lo_lam, hi_lam = schedule.lambda_range()
    tol = 1e-14 * max(1.0, abs(lam))
    range_tol = 1e-12 * max(1.0, abs(lam))
    if lam < lo_lam - range_tol or lam > hi_lam + range_tol:
        raise ValueError(
            f"lambda={lam} outside attainable range [{lo_lam}, {hi_lam}]"
        )
    lam = min(max(lam, lo_lam), hi_lam)

    # lambda decreases in t: lam near hi_lam means t near t_min.
    a, b = schedule.t_min, schedule.t_max
    fa = float(schedule.lam(a)) - lam
    fb = float(schedule.lam(b)) - lam
    if abs(fa) <= tol:
        return a
    if abs(fb) <= tol:
        return b
    coarse = 1e-9 * max(1.0, abs(lam))
    for _ in range(_BISECT_CAP):
        mid = 0.5 * (a + b)
        fm = float(schedule.lam(mid)) - lam
        if abs(fm) <= coarse:
            a = b = mid
            break
        if (fa > 0.0) == (fm > 0.0):
            a, fa = mid, fm
        else:
            b, fb = mid, fm
        if b - a <= 1e-15 * max(1.0, abs(a)):
            break
    t = 0.5 * (a + b)
    best_t, best_resid = t, abs(float(schedule.lam(t)) - lam)
    for _ in range(12):
        resid = float(schedule.lam(t)) - lam
        if abs(resid) < best_resid:
            best_t, best_resid = t, abs(resid)
        if abs(resid) <= tol:
            break
        step = resid / float(schedule.dlambda_dt(t))
        t_new = min(max(t - step, schedule.t_min), schedule.t_max)
        if t_new == t:
            break
        t = t_new
    return best_t


def tilde_eval(schedule: Schedule, lam: float) -> SnrPoint:
    """Evaluate the lambda-space functions and chain-rule derivatives."""
    t = t_of_lambda(schedule, lam)
    dlam = float(schedule.dlambda_dt(t))
    return SnrPoint(
        lam=float(lam),
        tilde_alpha=float(schedule.alpha(t)),
        tilde_sigma=float(schedule.sigma(t)),
        dtilde_alpha_dlambda=float(schedule.dalpha_dt(t)) / dlam,
        dtilde_sigma_dlambda=float(schedule.dsigma_dt(t)) / dlam,
    )


def time_warp(schedule: Schedule, warp: Callable[[np.ndarray], np.ndarray],
              dwarp: Callable[[np.ndarray], np.ndarray]) -> Schedule:
    """Reparameterize a schedule by a strictly increasing time warp.

    ``warp`` must fix the window endpoints; ``dwarp`` is its analytic
    derivative (needed so the warped schedule keeps closed-form
    derivatives).  The warped schedule traces the same lambda-space curve
    as the inner one.
    """
    grid = np.linspace(schedule.t_min, schedule.t_max, 513)
    w = np.asarray(warp(grid), dtype=float)
    if abs(w[0] - schedule.t_min) > 1e-9 or abs(w[-1] - schedule.t_max) > 1e-9:
        raise ConfigError("warp must fix the window endpoints")
    if not np.all(np.diff(w) > 0.0):
        raise ConfigError("warp must be strictly increasing on the window")
    dw = np.asarray(dwarp(grid), dtype=float)
    if not np.all(dw > 0.0):
        raise ConfigError("dwarp must be positive on the window")

    inner = schedule
    fns = dict(
        alpha=lambda t: inner.alpha(warp(np.asarray(t, dtype=float))),
        sigma=lambda t: inner.sigma(warp(np.asarray(t, dtype=float))),
        lam=lambda t: inner.lam(warp(np.asarray(t, dtype=float))),
        dalpha=lambda t: (inner.dalpha_dt(warp(np.asarray(t, dtype=float)))
                          * dwarp(np.asarray(t, dtype=float))),
        dsigma=lambda t: (inner.dsigma_dt(warp(np.asarray(t, dtype=float)))
                          * dwarp(np.asarray(t, dtype=float))),
        dlam=lambda t: (inner.dlambda_dt(warp(np.asarray(t, dtype=float)))
                        * dwarp(np.asarray(t, dtype=float))),
    )
    return Schedule("Warped", {"inner": inner, "warp": warp, "dwarp": dwarp},
                    schedule.t_min, schedule.t_max, fns)


@dataclass
class EquivalenceReport:
    equivalent: bool
    max_deviation: float
    endpoints_match: bool


def equivalence_check(s1: Schedule, s2: Schedule, n_points: int = 200,
                      tol: float = 1e-10) -> EquivalenceReport:
    """Test whether two schedules induce the same lambda-space process.

    The hypothesis (endpoint lambda values agree within ``tol``) is checked
    first; the conclusion is tested by comparing tilde_alpha on a shared
    lambda grid.  ``equivalent`` requires both.  Disjoint lambda ranges are
    an error.
    """
    lo1, hi1 = s1.lambda_range()
    lo2, hi2 = s2.lambda_range()
    lo, hi = max(lo1, lo2), min(hi1, hi2)
    if lo >= hi:
        raise ValueError("schedules have disjoint lambda ranges")
    endpoints_match = abs(lo1 - lo2) <= tol and abs(hi1 - hi2) <= tol

    lams = np.linspace(lo, hi, int(n_points))
    dev = 0.0
    for lam in lams:
        a1 = tilde_eval(s1, float(lam)).tilde_alpha
        a2 = tilde_eval(s2, float(lam)).tilde_alpha
        dev = max(dev, abs(a1 - a2))
    return EquivalenceReport(
        equivalent=bool(endpoints_match and dev <= tol),
        max_deviation=dev,
        endpoints_match=endpoints_match,
    )
