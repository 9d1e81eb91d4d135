"""Wald-type tests of affine hypotheses ``L theta = ell``.

The statistic ``W = K m^T (L Sigma L^T)^-1 m`` with ``m = L theta_hat - ell``
is asymptotically chi-square with ``r = rank(L)`` degrees of freedom under
the null.  Only affine constraints are supported; their Jacobian ``L^T`` is
constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .divergence import check_beta
from .errors import DegenerateConstraintError, DomainError, PowerUndefinedError, ValidationError
from .inference import sandwich_sigma
from .special import chisq_quantile, chisq_sf, std_normal_cdf


@dataclass(frozen=True, eq=False)
class AffineConstraint:
    """Null hypothesis ``L theta = ell`` with ``L`` of full row rank."""

    L: np.ndarray
    ell: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        L = np.atleast_2d(np.array(self.L, dtype=float))
        ell = np.atleast_1d(np.array(self.ell, dtype=float))
        if ell.shape != (L.shape[0],):
            raise ValidationError(f"ell must have length {L.shape[0]}, got {ell.shape}")
        if not (np.all(np.isfinite(L)) and np.all(np.isfinite(ell))):
            raise DomainError("constraint entries must be finite")
        sv = np.linalg.svd(L, compute_uv=False)
        if L.shape[0] > L.shape[1] or sv.size == 0 or np.any(sv <= 1e-10 * sv[0]):
            raise ValidationError("constraint matrix must have full row rank")
        L.flags.writeable = False
        ell.flags.writeable = False
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "ell", ell)
        object.__setattr__(self, "labels", tuple(self.labels))

    @classmethod
    def coordinate(cls, index, value, dim, label=None):
        """Hypothesis that parameter ``index`` of a ``dim``-vector equals ``value``."""
        L = np.zeros((1, dim))
        L[0, index] = 1.0
        return cls(L, [value], (label,) if label else ())

    @property
    def rank(self):
        return self.L.shape[0]

    def m(self, theta):
        vec = theta.vector if hasattr(theta, "vector") else np.asarray(theta, dtype=float)
        return self.L @ vec - self.ell


@dataclass(frozen=True)
class WaldResult:
    statistic: float
    dof: int
    p_value: float
    beta: float
    level: float | None = None
    rejected: bool | None = None

    def as_dict(self):
        return {
            "statistic": self.statistic,
            "dof": self.dof,
            "p_value": self.p_value,
            "beta": self.beta,
            "level": self.level,
            "rejected": self.rejected,
        }


def _constraint_cov(constraint, sigma):
    A = constraint.L @ sigma @ constraint.L.T
    A = (A + A.T) / 2.0
    # conditioning judged on the correlation scale so row scaling of L is irrelevant
    d = np.sqrt(np.clip(np.diag(A), 0.0, None))
    cond = float(np.linalg.cond(A / np.outer(d, d))) if np.all(d > 0) else np.inf
    if not cond < 1e12:
        raise DegenerateConstraintError(
            f"L Sigma L^T is singular (condition number {cond:.3g})", cond
        )
    return A


def wald_statistic(fit, cov, constraint, level=None):
    """Wald-type statistic and chi-square p-value at the fitted parameters.

    ``cov`` must be the sandwich covariance evaluated at ``fit.theta_hat``
    with the same ``beta``.  When ``level`` is given the result also records
    whether ``W`` exceeds the upper ``level`` chi-square point.
    """
    if cov.beta != fit.beta:
        raise ValidationError("covariance and fit use different tuning parameters")
    m = constraint.m(fit.theta_hat)
    A = _constraint_cov(constraint, cov.sigma)
    W = float(cov.total * m @ np.linalg.solve(A, m))
    W = max(W, 0.0)
    r = constraint.rank
    rejected = None
    if level is not None:
        rejected = bool(W > chisq_quantile(1.0 - level, r))
    return WaldResult(W, r, chisq_sf(W, r), fit.beta, level, rejected)


def wald_loss(theta, theta_star, plan, constraint, beta):
    """``m(theta)^T (L Sigma(theta*) L^T)^-1 m(theta)``."""
    cov = sandwich_sigma(plan, theta_star, beta)
    A = _constraint_cov(constraint, cov.sigma)
    m = constraint.m(theta)
    return float(m @ np.linalg.solve(A, m))


def _power_terms(theta_star, plan, constraint, beta):
    beta = check_beta(beta)
    cov = sandwich_sigma(plan, theta_star, beta)
    A = _constraint_cov(constraint, cov.sigma)
    m = constraint.m(theta_star)
    a_inv_m = np.linalg.solve(A, m)
    grad = 2.0 * constraint.L.T @ a_inv_m
    sigma2 = float(grad @ cov.sigma @ grad)
    loss = float(m @ a_inv_m)
    return loss, max(sigma2, 0.0), grad


def power_sigma(theta_star, plan, constraint, beta):
    """Asymptotic variance of ``sqrt(K)`` times the Wald loss at ``theta_star``.

    Returns ``g^T Sigma g`` with ``g = 2 L^T A^-1 m(theta*)`` the gradient of
    :func:`wald_loss` in its first argument.
    """
    return _power_terms(theta_star, plan, constraint, beta)[1]


def power_approx(theta_star, plan, constraint, beta, level=0.05):
    """Normal approximation to the rejection probability at ``theta_star``.

    ``1 - Phi((chi2_{r,level} / sqrt(K) - sqrt(K) l*) / sigma)`` where
    ``l*`` is the Wald loss at ``theta_star``.  ``plan`` fixes the sample
    size ``K``.
    """
    loss, sigma2, _ = _power_terms(theta_star, plan, constraint, beta)
    if sigma2 <= 0.0:
        raise PowerUndefinedError(
            "theta_star satisfies the null hypothesis; the rejection rate is the test level"
        )
    K = plan.total
    crit = chisq_quantile(1.0 - level, constraint.rank)
    z = (crit / math.sqrt(K) - math.sqrt(K) * loss) / math.sqrt(sigma2)
    return 1.0 - std_normal_cdf(z)
