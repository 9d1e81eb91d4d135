"""Proportional hazards model for one-shot device test data.

The cumulative hazard factorises as ``H(t, x) = H0(t) * lambda(x)`` with a
log-linear stress link ``lambda(x) = exp(alpha . x)``.  The baseline is
identified only at the inspection times ``IT_1 < ... < IT_I`` through the
unconstrained parameters ``eta``::

    gamma(eta_m) = 1 - exp(-exp(eta_m))
    G_i          = prod_{m >= i} gamma(eta_m)
    R0(IT_i)     = 1 - G_i
    R(IT_i, x)   = (1 - G_i) ** lambda(x)

so every finite ``eta`` gives baseline reliabilities that decrease strictly
with time.  Indices are zero-based throughout the Python API.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, EmptyCellError, UnsupportedTimeError, ValidationError


def _frozen(values, name, ndim):
    arr = np.array(values, dtype=float)
    if arr.ndim == 0 and ndim == 1:
        arr = arr.reshape(1)
    if arr.ndim != ndim:
        raise ValidationError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ThetaParams:
    """Model parameters: ``eta`` (one per inspection time) and ``alpha`` (one per stress factor)."""

    eta: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "eta", _frozen(self.eta, "eta", 1))
        object.__setattr__(self, "alpha", _frozen(self.alpha, "alpha", 1))

    @property
    def n_times(self):
        return self.eta.shape[0]

    @property
    def n_factors(self):
        return self.alpha.shape[0]

    @property
    def vector(self):
        """Stacked parameter vector ``(eta, alpha)``."""
        return np.concatenate([self.eta, self.alpha])

    @classmethod
    def from_vector(cls, vector, n_times):
        vector = np.asarray(vector, dtype=float)
        return cls(vector[:n_times], vector[n_times:])

    def names(self):
        return [f"eta{i + 1}" for i in range(self.n_times)] + [
            f"alpha{j + 1}" for j in range(self.n_factors)
        ]

    def __eq__(self, other):
        if not isinstance(other, ThetaParams):
            return NotImplemented
        return np.array_equal(self.eta, other.eta) and np.array_equal(self.alpha, other.alpha)

    def __repr__(self):
        return f"ThetaParams(eta={self.eta.tolist()}, alpha={self.alpha.tolist()})"


@dataclass(frozen=True, eq=False)
class TestPlan:
    """Design grid of a one-shot device life test.

    Attributes
    ----------
    inspection_times : ndarray, shape (I,)
        Strictly increasing positive inspection times.
    stress_levels : ndarray, shape (S, J)
        One row of stress factor values per test condition.
    group_sizes : ndarray, shape (I, S)
        Number of devices inspected at each (time, condition) cell.  Zero
        entries are allowed and such cells are skipped in every sum.
    """

    __test__ = False  # not a pytest class

    inspection_times: np.ndarray
    stress_levels: np.ndarray
    group_sizes: np.ndarray

    def __post_init__(self):
        it = _frozen(self.inspection_times, "inspection_times", 1)
        if np.any(it <= 0) or np.any(np.diff(it) <= 0):
            raise ValidationError("inspection times must be positive and strictly increasing")
        x = np.array(self.stress_levels, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        x = _frozen(x, "stress_levels", 2)
        k = np.array(self.group_sizes)
        if k.shape != (it.shape[0], x.shape[0]):
            raise ValidationError(
                f"group_sizes must have shape (I, S) = {(it.shape[0], x.shape[0])}, got {k.shape}"
            )
        if not np.all(np.equal(np.mod(k, 1), 0)) or np.any(k < 0):
            raise ValidationError("group sizes must be nonnegative integers")
        k = k.astype(np.int64)
        if k.sum() <= 0:
            raise ValidationError("at least one cell must contain tested devices")
        k.flags.writeable = False
        object.__setattr__(self, "inspection_times", it)
        object.__setattr__(self, "stress_levels", x)
        object.__setattr__(self, "group_sizes", k)

    @property
    def n_times(self):
        return self.inspection_times.shape[0]

    @property
    def n_conditions(self):
        return self.stress_levels.shape[0]

    @property
    def n_factors(self):
        return self.stress_levels.shape[1]

    @property
    def total(self):
        """Total number of devices ``K``."""
        return int(self.group_sizes.sum())

    def scaled(self, factor):
        """Same design with every group size multiplied by an integer factor."""
        return TestPlan(self.inspection_times, self.stress_levels, self.group_sizes * int(factor))


@dataclass(frozen=True, eq=False)
class DeviceData:
    """Observed failure counts ``n[i, s]`` on a test plan."""

    plan: TestPlan
    failures: np.ndarray

    def __post_init__(self):
        n = np.array(self.failures)
        if n.shape != self.plan.group_sizes.shape:
            raise ValidationError(
                f"failures must have shape {self.plan.group_sizes.shape}, got {n.shape}"
            )
        if not np.all(np.equal(np.mod(n, 1), 0)):
            raise ValidationError("failure counts must be integers")
        n = n.astype(np.int64)
        if np.any(n < 0) or np.any(n > self.plan.group_sizes):
            raise ValidationError("failure counts must satisfy 0 <= n <= K in every cell")
        n.flags.writeable = False
        object.__setattr__(self, "failures", n)

    @property
    def shape_summary(self):
        p = self.plan
        return {"I": p.n_times, "S": p.n_conditions, "J": p.n_factors, "K": p.total}

    def is_boundary(self):
        """True when every nonempty cell has ``n`` equal to 0 or ``K``."""
        k = self.plan.group_sizes
        active = k > 0
        n = self.failures
        return bool(np.all((n[active] == 0) | (n[active] == k[active])))


@dataclass(frozen=True)
class ProbPair:
    """Two-point distribution ``(p1, p2)``: failure and survival probabilities."""

    p1: float
    p2: float

    def __post_init__(self):
        for v in (self.p1, self.p2):
            if not (0.0 <= v <= 1.0):
                raise DomainError(f"probabilities must lie in [0, 1], got {v}")
        if abs(self.p1 + self.p2 - 1.0) > 1e-12:
            raise DomainError("probability pair must sum to one")

    @classmethod
    def from_failure(cls, p1):
        return cls(float(p1), float(1.0 - p1))

    def __iter__(self):
        yield self.p1
        yield self.p2


@dataclass(frozen=True, eq=False)
class WeibullTruth:
    """Weibull lifetime model with common shape ``exp(b)`` and scale ``exp(c0 + c . x)``."""

    b: float
    c0: float
    c: np.ndarray

    def __post_init__(self):
        if not (math.isfinite(self.b) and math.isfinite(self.c0)):
            raise DomainError("b and c0 must be finite")
        object.__setattr__(self, "c", _frozen(self.c, "c", 1))

    @property
    def shape(self):
        return math.exp(self.b)

    def scale(self, x):
        return math.exp(self.c0 + float(np.dot(self.c, x)))

    def cdf(self, t, x):
        """Failure probability by time ``t`` at stress ``x``."""
        return -math.expm1(-((t / self.scale(x)) ** self.shape))

    def survival(self, t, x):
        return math.exp(-((t / self.scale(x)) ** self.shape))

    def as_dict(self):
        return {"b": self.b, "c0": self.c0, "c": self.c.tolist()}


def gamma_from_eta(eta_i):
    """Conditional failure fraction ``1 - exp(-exp(eta_i))``."""
    eta_i = float(eta_i)
    if not math.isfinite(eta_i):
        raise DomainError("eta must be finite")
    return -math.expm1(-math.exp(eta_i))


def cumulative_G(eta, i):
    """Baseline failure probability ``G_i = prod_{m >= i} gamma(eta_m)`` at ``IT_i``."""
    eta = np.asarray(eta, dtype=float)
    if not 0 <= i < eta.shape[0]:
        raise IndexError(f"inspection index {i} out of range for I={eta.shape[0]}")
    return math.prod(gamma_from_eta(e) for e in eta[i:])


def log1m_G(eta, i):
    """``log(1 - G_i)`` computed from the log-factors; ``-inf`` when ``G_i`` rounds to 1."""
    eta = np.asarray(eta, dtype=float)
    if not 0 <= i < eta.shape[0]:
        raise IndexError(f"inspection index {i} out of range for I={eta.shape[0]}")
    gam = [gamma_from_eta(e) for e in eta[i:]]
    log_g = -math.inf if min(gam) == 0.0 else math.fsum(math.log(g) for g in gam)
    if log_g >= 0.0:
        return -math.inf
    return math.log(-math.expm1(log_g))


def stress_multiplier(alpha, x):
    """Stress link ``exp(alpha . x)``."""
    alpha = np.asarray(alpha, dtype=float)
    x = np.asarray(x, dtype=float)
    if alpha.shape != x.shape:
        raise ValidationError(f"alpha and x lengths differ: {alpha.shape} vs {x.shape}")
    return math.exp(float(np.dot(alpha, x)))


def cell_reliability(theta, i, x):
    """Reliability ``R(IT_i, x) = (1 - G_i) ** lambda(x)``.

    ``x`` may be a design stress or any normal operating condition.
    """
    lam = stress_multiplier(theta.alpha, x)
    return math.exp(lam * log1m_G(theta.eta, i))


def cell_prob_pair(theta, plan, i, s):
    """Model probability pair ``(1 - R, R)`` for cell ``(i, s)``."""
    if not 0 <= s < plan.n_conditions:
        raise IndexError(f"condition index {s} out of range for S={plan.n_conditions}")
    lam = stress_multiplier(theta.alpha, plan.stress_levels[s])
    log_r = lam * log1m_G(theta.eta, i)
    return ProbPair(-math.expm1(log_r), math.exp(log_r))


def empirical_prob_pair(data, i, s):
    """Observed proportions ``(n/K, 1 - n/K)`` for cell ``(i, s)``."""
    k = int(data.plan.group_sizes[i, s])
    if k == 0:
        raise EmptyCellError(f"cell ({i}, {s}) has no tested devices")
    p1 = data.failures[i, s] / k
    return ProbPair(p1, 1.0 - p1)


def reliability_matrix(theta, plan):
    """All cell reliabilities ``R(IT_i, x_s)`` as an (I, S) array."""
    t = np.exp(theta.eta)
    # G == 1 gives log(1 - G) = -inf and R = 0, which is intended
    with np.errstate(divide="ignore"):
        log_gamma = np.log(-np.expm1(-t))
        log_g = np.cumsum(log_gamma[::-1])[::-1]
        log1m_g = np.log(-np.expm1(log_g))
    lam = np.exp(plan.stress_levels @ theta.alpha)
    return np.exp(np.outer(log1m_g, lam))


def weibull_to_ph(truth, plan):
    """Proportional hazards parameters equivalent to a Weibull lifetime model.

    With ``tau = exp(b)`` the Weibull baseline is
    ``R0(t) = exp(-t**tau * exp(-tau * c0))`` and the stress coefficients
    are ``alpha_j = -tau * c_j``.  ``eta`` follows from inverting the
    ``gamma`` recursion at the plan's inspection times.

    Parameters
    ----------
    truth : WeibullTruth
    plan : TestPlan or array_like
        A test plan, or directly the inspection times.

    Returns
    -------
    ThetaParams
    """
    it = plan.inspection_times if isinstance(plan, TestPlan) else np.asarray(plan, dtype=float)
    tau = truth.shape
    # F0_i = 1 - R0(IT_i)
    f0 = -np.expm1(-(it**tau) * math.exp(-tau * truth.c0))
    eta = np.empty(it.shape[0])
    eta[-1] = tau * (math.log(it[-1]) - truth.c0)
    eta[:-1] = np.log(-np.log1p(-f0[:-1] / f0[1:]))
    return ThetaParams(eta, -tau * truth.c)


def reliability_at_time(model, t, x0, plan=None):
    """Reliability at time ``t`` under operating condition ``x0``.

    For a :class:`WeibullTruth` any ``t > 0`` is allowed.  For fitted
    :class:`ThetaParams` the model only identifies the baseline at the
    inspection times, so ``t`` must be one of ``plan.inspection_times``.
    """
    t = float(t)
    if not t > 0:
        raise DomainError("time must be positive")
    if isinstance(model, WeibullTruth):
        return model.survival(t, np.asarray(x0, dtype=float))
    if plan is None:
        raise ValidationError("a test plan is required to evaluate fitted parameters")
    hits = np.flatnonzero(np.isclose(plan.inspection_times, t, rtol=1e-12, atol=0.0))
    if hits.size == 0:
        raise UnsupportedTimeError(
            f"t={t} is not an inspection time; the semi-parametric model does not identify R there"
        )
    return cell_reliability(model, int(hits[0]), x0)


def inspection_index(plan, t):
    """Zero-based index of inspection time ``t`` in ``plan``."""
    hits = np.flatnonzero(np.isclose(plan.inspection_times, float(t), rtol=1e-12, atol=0.0))
    if hits.size == 0:
        raise UnsupportedTimeError(f"t={t} is not an inspection time of the plan")
    return int(hits[0])
