"""Kullback-Leibler and density power divergences between probability pairs.

The estimator minimises the ``K_is / K`` weighted sum over cells of a
divergence between the observed pair ``(n/K, 1 - n/K)`` and the model pair
``(1 - R, R)``.  ``beta = 0`` is the Kullback-Leibler (maximum likelihood)
case; larger ``beta`` trades efficiency for robustness.
"""

import math

import numpy as np

from . import kernels
from .errors import DomainError
from .model import reliability_matrix


def check_beta(beta):
    """Validate a tuning parameter and return it as a float."""
    beta = float(beta)
    if not math.isfinite(beta) or beta < 0:
        raise DomainError(f"tuning parameter beta must be finite and >= 0, got {beta}")
    return beta


def _xlogxy(x, y):
    if x == 0.0:
        return 0.0
    if y == 0.0:
        return math.inf
    return x * math.log(x / y)


def kl_divergence(p_hat, pi):
    """``sum_j p_hat_j log(p_hat_j / pi_j)`` with ``0 log 0 = 0``.

    Returns ``inf`` when a model probability is zero where the empirical one
    is positive.
    """
    return _xlogxy(p_hat.p1, pi.p1) + _xlogxy(p_hat.p2, pi.p2)


def dpd_reduced(p_hat, pi, beta):
    """Density power divergence without the term that depends on ``p_hat`` alone."""
    beta = check_beta(beta)
    if beta == 0.0:
        raise DomainError("the reduced divergence is defined for beta > 0 only")
    return (pi.p1 ** (beta + 1) + pi.p2 ** (beta + 1)) - (beta + 1) / beta * (
        p_hat.p1 * pi.p1**beta + p_hat.p2 * pi.p2**beta
    )


def dpd(p_hat, pi, beta):
    """Density power divergence ``d_beta(p_hat, pi)``; ``beta = 0`` gives KL."""
    beta = check_beta(beta)
    if beta == 0.0:
        return kl_divergence(p_hat, pi)
    constant = (p_hat.p1 ** (beta + 1) + p_hat.p2 ** (beta + 1)) / beta
    return dpd_reduced(p_hat, pi, beta) + constant


def weighted_objective(data, theta, beta):
    """Objective minimised by the weighted minimum DPD estimator.

    For ``beta > 0`` this is ``sum (K_is/K) d*_beta``, the reduced divergence;
    for ``beta = 0`` it is the weighted Kullback-Leibler divergence.  Model
    probabilities are clamped to ``[1e-12, 1 - 1e-12]``.
    """
    beta = check_beta(beta)
    plan = data.plan
    return kernels.objective(
        theta.eta, theta.alpha, plan.stress_levels, plan.group_sizes, data.failures, beta
    )


def log_likelihood(data, theta):
    """Binomial log-likelihood of the failure counts, without the combinatorial constant."""
    r = reliability_matrix(theta, data.plan)
    n = data.failures.astype(float)
    k = data.plan.group_sizes.astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(n > 0, n * np.log1p(-r), 0.0) + np.where(k - n > 0, (k - n) * np.log(r), 0.0)
    return float(terms.sum())
