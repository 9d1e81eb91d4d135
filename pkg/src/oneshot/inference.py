"""Sandwich covariance, delta-method standard errors and reliability intervals."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import kernels
from .divergence import check_beta
from .errors import BoundaryEstimateError, DomainError, EstimationPrecisionError
from .estimation import reliability_gradient
from .model import cell_reliability
from .special import std_normal_quantile

MAX_CONDITION = 1e12


@dataclass(frozen=True, eq=False)
class SandwichCov:
    """``J``, ``K`` and ``Sigma = J^-1 K J^-1`` evaluated at one parameter value.

    ``sigma`` is the asymptotic covariance of ``sqrt(K) (theta_hat - theta)``.
    """

    J_mat: np.ndarray
    K_mat: np.ndarray
    sigma: np.ndarray
    beta: float
    theta: object
    total: int
    condition_number: float


@dataclass(frozen=True)
class ReliabilityCI:
    estimate: float
    lower: float
    upper: float
    level: float
    method: str
    se: float
    clipped: bool = False

    def as_dict(self):
        return {
            "estimate": self.estimate,
            "lower": self.lower,
            "upper": self.upper,
            "level": self.level,
            "method": self.method,
            "se": self.se,
            "clipped": self.clipped,
        }


def _matrices(plan, theta, beta):
    beta = check_beta(beta)
    return kernels.information_matrices(
        theta.eta, theta.alpha, plan.stress_levels, plan.group_sizes, beta
    )


def matrix_J(plan, theta, beta):
    """``sum (K_is/K) Delta_is [(1-R)^(beta-1) + R^(beta-1)]`` with ``Delta_is = d d^T``."""
    return _matrices(plan, theta, beta)[0]


def matrix_K(plan, theta, beta):
    """``sum (K_is/K) Delta_is (1-R) R [(1-R)^(beta-1) + R^(beta-1)]^2``."""
    return _matrices(plan, theta, beta)[1]


def sandwich_sigma(plan, theta, beta):
    """Asymptotic covariance ``J^-1 K J^-1`` at ``theta``.

    Raises
    ------
    EstimationPrecisionError
        If ``J`` is not positive definite or its condition number exceeds
        ``MAX_CONDITION``.
    """
    beta = check_beta(beta)
    J, K = _matrices(plan, theta, beta)
    J = (J + J.T) / 2.0
    K = (K + K.T) / 2.0
    if not (np.all(np.isfinite(J)) and np.all(np.isfinite(K))):
        raise EstimationPrecisionError("information matrices are not finite", math.inf)
    cond = float(np.linalg.cond(J))
    if not cond < MAX_CONDITION:
        raise EstimationPrecisionError(
            f"J is ill-conditioned (condition number {cond:.3g})", cond
        )
    try:
        factor = linalg.cho_factor(J)
    except linalg.LinAlgError as exc:
        raise EstimationPrecisionError("J is not positive definite", cond) from exc
    jinv_k = linalg.cho_solve(factor, K)
    sigma = linalg.cho_solve(factor, jinv_k.T)
    sigma = (sigma + sigma.T) / 2.0
    return SandwichCov(J, K, sigma, beta, theta, plan.total, cond)


def reliability_se(fit, cov, i, x0):
    """Delta-method standard error of ``R(IT_i, x0; theta_hat)``.

    ``sqrt(P^T Sigma P / K)`` where ``P`` is the gradient of the reliability.
    The ``1/K`` turns the covariance of ``sqrt(K)(theta_hat - theta)`` into
    the covariance of ``theta_hat``.
    """
    P = reliability_gradient(fit.theta_hat, i, x0)
    var = float(P @ cov.sigma @ P) / cov.total
    return math.sqrt(max(var, 0.0))


def _z(level):
    level = float(level)
    if not 0.0 < level < 1.0:
        raise DomainError(f"confidence level must lie in (0, 1), got {level}")
    return std_normal_quantile(1.0 - (1.0 - level) / 2.0)


def ci_plain(fit, cov, i, x0, level=0.95):
    """Symmetric Wald interval ``R_hat +/- z se``, clipped to [0, 1]."""
    z = _z(level)
    r = cell_reliability(fit.theta_hat, i, x0)
    se = reliability_se(fit, cov, i, x0)
    lo, hi = r - z * se, r + z * se
    clipped = lo < 0.0 or hi > 1.0
    return ReliabilityCI(r, max(lo, 0.0), min(hi, 1.0), float(level), "plain", se, clipped)


def ci_logit(fit, cov, i, x0, level=0.95):
    """Interval from a normal approximation on the log-odds scale.

    ``(R / (R + (1-R) T), R / (R + (1-R)/T))`` with
    ``T = exp(z se / (R (1-R)))``; always inside (0, 1).
    """
    z = _z(level)
    r = cell_reliability(fit.theta_hat, i, x0)
    if not 0.0 < r < 1.0:
        raise BoundaryEstimateError(f"estimated reliability {r} is on the boundary")
    se = reliability_se(fit, cov, i, x0)
    T = math.exp(z * se / (r * (1.0 - r)))
    lo = r / (r + (1.0 - r) * T)
    hi = r / (r + (1.0 - r) / T)
    return ReliabilityCI(r, lo, hi, float(level), "logit", se)
