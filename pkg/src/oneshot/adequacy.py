"""Goodness of fit and tuning-parameter selection.

The distance statistic is the largest absolute gap between an observed
failure count and its fitted expectation.  Its exact p-value treats the
counts as independent binomials at the fitted probabilities.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .divergence import check_beta
from .errors import EstimationPrecisionError, ValidationError
from .estimation import FitOptions, fit
from .inference import sandwich_sigma
from .model import reliability_matrix
from .special import binomial_interval_prob

log = logging.getLogger(__name__)

# ceil/floor of K(1-R) -/+ M are taken with this slack so that the cell that
# attains M (|n - K pi| == M up to rounding) stays inside its own bounds
_BOUND_SLACK = 1e-9

DEFAULT_PILOT = 0.5


def _expected_failures(data, theta):
    return data.plan.group_sizes * -np.expm1(np.log(reliability_matrix(theta, data.plan)))


def distance_statistic(data, fit_result):
    """``max |n_is - K_is (1 - R_is)|`` over cells with devices."""
    k = data.plan.group_sizes
    gap = np.abs(data.failures - _expected_failures(data, fit_result.theta_hat))
    return float(gap[k > 0].max())


def acceptance_bounds(data, fit_result, m_stat):
    """Per-cell integer bounds ``(Phi, Psi)`` clamped to the binomial support."""
    k = data.plan.group_sizes
    mean = _expected_failures(data, fit_result.theta_hat)
    lo = np.ceil(mean - m_stat - _BOUND_SLACK).astype(np.int64)
    hi = np.floor(mean + m_stat + _BOUND_SLACK).astype(np.int64)
    return np.clip(lo, 0, k), np.clip(hi, 0, k)


def exact_pvalue(data, fit_result, m_stat):
    """``1 - prod Pr(Phi_is <= n_is <= Psi_is)`` under the fitted binomials."""
    m_stat = float(m_stat)
    if not m_stat >= 0:
        raise ValidationError("distance statistic must be nonnegative")
    k = data.plan.group_sizes
    r = reliability_matrix(fit_result.theta_hat, data.plan)
    lo, hi = acceptance_bounds(data, fit_result, m_stat)
    log_inside = 0.0
    for (i, s), kis in np.ndenumerate(k):
        if kis == 0:
            continue
        p = -math.expm1(math.log(r[i, s]))
        prob = binomial_interval_prob(lo[i, s], hi[i, s], int(kis), p)
        if prob <= 0.0:
            return 1.0
        log_inside += math.log(prob)
    return float(min(1.0, max(0.0, -math.expm1(log_inside))))


@dataclass(frozen=True, eq=False)
class GofResult:
    m_stat: float
    p_value: float
    lower_bounds: np.ndarray
    upper_bounds: np.ndarray
    beta: float

    def as_dict(self):
        return {
            "beta": self.beta,
            "m_stat": self.m_stat,
            "p_value": self.p_value,
            "lower_bounds": self.lower_bounds.tolist(),
            "upper_bounds": self.upper_bounds.tolist(),
        }


def goodness_of_fit(data, fit_result):
    m = distance_statistic(data, fit_result)
    lo, hi = acceptance_bounds(data, fit_result, m)
    return GofResult(m, exact_pvalue(data, fit_result, m), lo, hi, fit_result.beta)


@dataclass(frozen=True, eq=False)
class TuningSelection:
    grid: tuple
    scores: tuple
    chosen_beta: float
    criterion: str
    pilot_beta: float | None = None
    excluded: tuple = ()

    def as_dict(self):
        return {
            "criterion": self.criterion,
            "grid": list(self.grid),
            "scores": list(self.scores),
            "chosen_beta": self.chosen_beta,
            "pilot_beta": self.pilot_beta,
            "excluded": list(self.excluded),
        }


def _grid(grid):
    values = sorted({check_beta(b) for b in grid})
    if not values:
        raise ValidationError("tuning grid must not be empty")
    return values


def _choose(grid, scores):
    finite = [(s, b) for b, s in zip(grid, scores) if math.isfinite(s)]
    if not finite:
        raise ValidationError("no grid point produced a usable score")
    best = min(s for s, _ in finite)
    # ties go to the smallest beta; grid is ascending
    return next(b for s, b in finite if s <= best)


def select_beta_distance(data, grid=None, options=None):
    """Choose ``beta`` minimising the distance statistic over ``grid``.

    Fits that do not converge are scored ``inf`` and listed in ``excluded``.
    The default grid is ``0, 0.1, ..., 0.9``.
    """
    grid = _grid(grid if grid is not None else [round(0.1 * k, 1) for k in range(10)])
    scores, excluded = [], []
    for b in grid:
        res = fit(data, b, options)
        if not res.converged:
            log.warning("excluding beta=%g from tuning: fit did not converge", b)
            excluded.append(b)
            scores.append(math.inf)
            continue
        scores.append(distance_statistic(data, res))
    return TuningSelection(tuple(grid), tuple(scores), _choose(grid, scores), "distance", None, tuple(excluded))


def mse_hat(data, fit_result, theta_pilot):
    """Estimated mean squared error of the fit at its ``beta``.

    ``||theta_beta - theta_P||^2 + trace(Sigma_beta(theta_beta)) / K``.
    """
    cov = sandwich_sigma(data.plan, fit_result.theta_hat, fit_result.beta)
    diff = fit_result.theta_hat.vector - theta_pilot.vector
    return float(diff @ diff + np.trace(cov.sigma) / data.plan.total)


def default_wj_grid():
    return [k / 100.0 for k in range(101)]


def select_beta_wj(data, grid=None, pilot_beta=DEFAULT_PILOT, options=None):
    """Choose ``beta`` minimising the estimated MSE against a pilot fit.

    The default grid has 101 equally spaced points on ``[0, 1]``.  Grid
    points whose fit does not converge or whose sandwich covariance is
    singular are scored ``inf`` and listed in ``excluded``.
    """
    grid = _grid(grid if grid is not None else default_wj_grid())
    pilot_beta = check_beta(pilot_beta)
    options = options or FitOptions()
    pilot = fit(data, pilot_beta, options)
    if not pilot.converged:
        log.warning("pilot fit at beta=%g did not converge", pilot_beta)
    scores, excluded = [], []
    for b in grid:
        res = pilot if b == pilot_beta else fit(data, b, options)
        if not res.converged:
            log.warning("excluding beta=%g from tuning: fit did not converge", b)
            excluded.append(b)
            scores.append(math.inf)
            continue
        try:
            scores.append(mse_hat(data, res, pilot.theta_hat))
        except EstimationPrecisionError as exc:
            log.warning("excluding beta=%g from tuning: %s", b, exc)
            excluded.append(b)
            scores.append(math.inf)
    return TuningSelection(
        tuple(grid), tuple(scores), _choose(grid, scores), "warwick_jones", pilot_beta, tuple(excluded)
    )
