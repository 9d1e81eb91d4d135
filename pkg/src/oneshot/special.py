"""Normal, chi-square and binomial distribution functions."""

import math

import numpy as np
from scipy import special as sc

from .errors import DomainError

# Above this many trials the binomial CDF switches to the incomplete beta route.
DIRECT_SUM_LIMIT = 10_000


def _check_prob(p, name="p"):
    p = float(p)
    if not 0.0 < p < 1.0:
        raise DomainError(f"{name} must lie in (0, 1), got {p}")
    return p


def std_normal_cdf(x):
    return float(sc.ndtr(float(x)))


def std_normal_quantile(p):
    return float(sc.ndtri(_check_prob(p)))


def chisq_cdf(x, dof):
    """Lower-tail chi-square probability, via the regularized lower incomplete gamma."""
    if dof <= 0:
        raise DomainError("degrees of freedom must be positive")
    x = float(x)
    if x <= 0:
        return 0.0
    return float(sc.gammainc(dof / 2.0, x / 2.0))


def chisq_sf(x, dof):
    if dof <= 0:
        raise DomainError("degrees of freedom must be positive")
    x = float(x)
    if x <= 0:
        return 1.0
    return float(sc.gammaincc(dof / 2.0, x / 2.0))


def chisq_quantile(p, dof):
    if dof <= 0:
        raise DomainError("degrees of freedom must be positive")
    return float(2.0 * sc.gammaincinv(dof / 2.0, _check_prob(p)))


def _log_pmf(j, n, p):
    return (
        sc.gammaln(n + 1)
        - sc.gammaln(j + 1)
        - sc.gammaln(n - j + 1)
        + sc.xlogy(j, p)
        + sc.xlog1py(n - j, -p)
    )


def binomial_cdf(k, n, p):
    """``P(X <= k)`` for ``X ~ Binomial(n, p)``.

    ``k < 0`` gives 0 and ``k >= n`` gives 1.  For ``n`` up to
    ``DIRECT_SUM_LIMIT`` the shorter tail is summed term by term from
    log-space pmf values; larger ``n`` use the regularized incomplete beta.
    """
    k = math.floor(k)
    n = int(n)
    p = float(p)
    if n < 0 or not 0.0 <= p <= 1.0:
        raise DomainError("need n >= 0 and 0 <= p <= 1")
    if k < 0:
        return 0.0
    if k >= n:
        return 1.0
    if p == 0.0:
        return 1.0
    if p == 1.0:
        return 0.0
    if n > DIRECT_SUM_LIMIT:
        return float(sc.bdtr(k, n, p))
    if k < n * p:
        j = np.arange(0, k + 1)
        return float(min(1.0, np.exp(_log_pmf(j, n, p)).sum()))
    j = np.arange(k + 1, n + 1)
    return float(max(0.0, 1.0 - np.exp(_log_pmf(j, n, p)).sum()))


def binomial_interval_prob(lo, hi, n, p):
    """``P(lo <= X <= hi)`` for ``X ~ Binomial(n, p)``."""
    lo = max(math.ceil(lo), 0)
    hi = min(math.floor(hi), int(n))
    if hi < lo:
        return 0.0
    if lo == 0 and hi == n:
        return 1.0
    if n <= DIRECT_SUM_LIMIT and 0.0 < p < 1.0:
        j = np.arange(lo, hi + 1)
        return float(min(1.0, np.exp(_log_pmf(j, n, p)).sum()))
    return max(0.0, binomial_cdf(hi, n, p) - binomial_cdf(lo - 1, n, p))
