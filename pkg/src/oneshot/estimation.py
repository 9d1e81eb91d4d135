"""Weighted minimum DPD estimation.

The estimator minimises :func:`oneshot.divergence.weighted_objective` over
the unconstrained parameter vector ``(eta, alpha)``.  The gradient is
analytic; at a minimiser it satisfies the estimating equations

    sum_{i,s} delta_is (K_is (1 - R_is) - n_is) [(1 - R_is)**(beta-1) + R_is**(beta-1)] = 0

where ``delta_is = dR_is / dtheta``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _pykernels, kernels
from .divergence import check_beta
from .model import ThetaParams, cumulative_G, gamma_from_eta, log1m_G, reliability_matrix, stress_multiplier

log = logging.getLogger(__name__)

_ARMIJO = 1e-4
_PROB_FLOOR = _pykernels.PROB_FLOOR
_MAX_BACKTRACK = 60
# accepted iterations without any objective decrease before BFGS hands over to the polish
_STALL = 20
_POLISH_STEPS = 20


def delta_eta(theta, i, x):
    """Derivative of ``R(IT_i, x)`` with respect to ``eta``.

    Component ``u`` is ``-(1 - G_i)**(lambda - 1) * lambda * dG_i/deta_u``
    with ``dG_i/deta_u = exp(eta_u) exp(-exp(eta_u)) G_i / gamma(eta_u)``
    for ``u >= i`` and zero otherwise.
    """
    g_i = cumulative_G(theta.eta, i)
    lam = stress_multiplier(theta.alpha, x)
    # (1 - G_i)**(lam - 1) through the stable log; exactly 1 when lam == 1
    l1m = log1m_G(theta.eta, i)
    power = 1.0 if lam == 1.0 else math.exp((lam - 1.0) * l1m)
    out = np.zeros(theta.n_times)
    for u in range(i, theta.n_times):
        e = float(theta.eta[u])
        gam = gamma_from_eta(e)
        if gam == 0.0:
            # G_i / gamma_u is the product of the other factors
            rest = math.prod(gamma_from_eta(v) for k, v in enumerate(theta.eta[i:], start=i) if k != u)
            dg = math.exp(e) * math.exp(-math.exp(e)) * rest
        else:
            dg = math.exp(e) * math.exp(-math.exp(e)) * g_i / gam
        out[u] = -power * lam * dg
    return out


def delta_alpha(theta, i, x):
    """Derivative of ``R(IT_i, x)`` with respect to ``alpha``."""
    lam = stress_multiplier(theta.alpha, x)
    x = np.asarray(x, dtype=float)
    l1m = log1m_G(theta.eta, i)
    if l1m == -math.inf:
        return np.zeros_like(x)
    return math.exp(lam * l1m) * l1m * lam * x


def reliability_gradient(theta, i, x):
    """Stacked ``(delta_eta, delta_alpha)`` at inspection index ``i`` and stress ``x``."""
    return np.concatenate([delta_eta(theta, i, x), delta_alpha(theta, i, x)])


def objective_gradient(data, theta, beta):
    """Gradient of the weighted objective with respect to ``(eta, alpha)``."""
    beta = check_beta(beta)
    plan = data.plan
    _, grad = kernels.objective_gradient(
        theta.eta, theta.alpha, plan.stress_levels, plan.group_sizes, data.failures, beta
    )
    return grad


@dataclass(frozen=True)
class FitOptions:
    max_iterations: int = 500
    gradient_tolerance: float = 1e-8
    initial_theta: ThetaParams | None = None
    restarts: int = 3
    seed: int = 20240601

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if not self.gradient_tolerance > 0:
            raise ValueError("gradient_tolerance must be positive")
        if self.restarts < 0:
            raise ValueError("restarts must be nonnegative")


@dataclass(frozen=True, eq=False)
class FitResult:
    """Outcome of :func:`fit`.

    ``gradient_norm`` is the max-norm of the objective gradient at
    ``theta_hat``; ``trace`` holds the objective after every accepted
    iteration of the winning start.
    """

    theta_hat: ThetaParams
    beta: float
    objective: float
    gradient_norm: float
    converged: bool
    iterations: int
    data_summary: dict
    gradient_tolerance: float
    start_index: int = 0
    trace: tuple = ()
    warnings: tuple = field(default_factory=tuple)

    def as_dict(self):
        return {
            "beta": self.beta,
            "eta": self.theta_hat.eta.tolist(),
            "alpha": self.theta_hat.alpha.tolist(),
            "objective": self.objective,
            "gradient_norm": self.gradient_norm,
            "converged": self.converged,
            "iterations": self.iterations,
            "start_index": self.start_index,
            "data": dict(self.data_summary),
            "warnings": list(self.warnings),
        }


def default_initial_theta(data):
    """Starting point from pooled empirical failure fractions.

    ``G_i`` is estimated by the pooled fraction at ``IT_i`` clipped to
    ``[0.01, 0.99]`` and made nondecreasing in ``i``; ``eta`` then inverts
    the ``gamma`` recursion and ``alpha`` starts at zero.
    """
    k = data.plan.group_sizes.sum(axis=1).astype(float)
    n = data.failures.sum(axis=1).astype(float)
    frac = np.divide(n, k, out=np.full_like(k, np.nan), where=k > 0)
    # inspection times without devices borrow the overall fraction
    overall = data.failures.sum() / data.plan.total
    frac = np.where(np.isnan(frac), overall, frac)
    g = np.maximum.accumulate(np.clip(frac, 0.01, 0.99))
    gam = np.empty_like(g)
    gam[-1] = g[-1]
    gam[:-1] = g[:-1] / g[1:]
    gam = np.clip(gam, 1e-3, 1 - 1e-3)
    eta = np.log(-np.log1p(-gam))
    return ThetaParams(eta, np.zeros(data.plan.n_factors))


def _inverse_scoring(fun_info, x, beta):
    # inverse of (beta + 1) J as the initial inverse Hessian
    P = x.shape[0]
    try:
        J, _ = fun_info(x)
        H = (beta + 1.0) * (J + J.T) / 2.0
        w, V = np.linalg.eigh(H)
    except (np.linalg.LinAlgError, FloatingPointError, ValueError):
        return np.eye(P)
    if not np.all(np.isfinite(w)) or w[-1] <= 0:
        return np.eye(P)
    w = np.maximum(w, w[-1] * 1e-10)
    return (V / w) @ V.T


@dataclass
class _Run:
    x: np.ndarray
    f: float
    g: np.ndarray
    iterations: int
    converged: bool
    trace: list

    @property
    def gnorm(self):
        return float(np.max(np.abs(self.g))) if np.all(np.isfinite(self.g)) else math.inf


def _finite(f, g):
    return math.isfinite(f) and bool(np.all(np.isfinite(g)))


def _bfgs(fg, x0, h0, gtol, max_iter):
    x = np.array(x0, dtype=float)
    f, g = fg(x)
    if not _finite(f, g):
        return _Run(x, math.inf, np.full_like(x, np.nan), 0, False, [])
    H = h0.copy()
    trace = [f]
    it = 0
    fresh = True
    flat = 0
    while np.max(np.abs(g)) > gtol and it < max_iter:
        p = -H @ g
        slope = float(g @ p)
        if not slope < 0:
            H, fresh = h0.copy(), True
            p = -H @ g
            slope = float(g @ p)
        step = 1.0
        accepted = None
        fallback = None
        gmax = np.max(np.abs(g))
        for _ in range(_MAX_BACKTRACK):
            xn = x + step * p
            fn, gn = fg(xn)
            if _finite(fn, gn):
                if fn <= f + _ARMIJO * step * slope:
                    accepted = (xn, fn, gn)
                    break
                # at the rounding floor of f, take a non-increasing step that shrinks the gradient
                if fallback is None and fn <= f and np.max(np.abs(gn)) < gmax:
                    fallback = (xn, fn, gn)
            step *= 0.5
        if accepted is None:
            accepted = fallback
        if accepted is None:
            if fresh:
                break
            H, fresh = h0.copy(), True
            continue
        xn, fn, gn = accepted
        s = xn - x
        y = gn - g
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            rho = 1.0 / sy
            Hy = H @ y
            H = H - rho * (np.outer(s, Hy) + np.outer(Hy, s)) + (rho * rho * float(y @ Hy) + rho) * np.outer(s, s)
            fresh = False
        flat = flat + 1 if fn >= f else 0
        x, f, g = xn, fn, gn
        trace.append(f)
        it += 1
        if flat >= _STALL:
            break
    return _Run(x, f, g, it, bool(np.max(np.abs(g)) <= gtol), trace)


def _polish(fg, run, gtol, max_iter):
    """Newton iterations on the estimating equations.

    Near the minimiser of an ill-conditioned objective the decrease of a
    good step can fall below the rounding level of ``f``, which stalls any
    line search.  Solving ``g(theta) = 0`` directly, with a central-difference
    Jacobian of the analytic gradient, sidesteps that.  A step is kept only
    if it shrinks the max-norm of the gradient without raising ``f`` beyond
    rounding.
    """
    x, f, g = run.x, run.f, run.g
    trace = list(run.trace)
    it = run.iterations
    for _ in range(_POLISH_STEPS):
        gmax = float(np.max(np.abs(g)))
        if gmax <= gtol or it >= max_iter:
            break
        P = x.shape[0]
        H = np.empty((P, P))
        for k in range(P):
            h = 1e-6 * max(1.0, abs(x[k]))
            e = np.zeros(P)
            e[k] = h
            H[:, k] = (fg(x + e)[1] - fg(x - e)[1]) / (2.0 * h)
        H = (H + H.T) / 2.0
        try:
            xn = x - np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            break
        fn, gn = fg(xn)
        slack = 1e-12 * max(1.0, abs(f))
        if not (_finite(fn, gn) and fn <= f + slack and np.max(np.abs(gn)) < gmax):
            break
        x, f, g = xn, fn, gn
        trace.append(f)
        it += 1
    return _Run(x, f, g, it, bool(np.max(np.abs(g)) <= gtol), trace)


def _on_clamp_plateau(data, x, I):
    theta = ThetaParams.from_vector(x, I)
    R = reliability_matrix(theta, data.plan)
    k, n = data.plan.group_sizes, data.failures
    interior = (n > 0) & (n < k)
    clamped = (R <= _PROB_FLOOR) | (R >= 1.0 - _PROB_FLOOR)
    return bool(np.any(interior & clamped))


def _starts(data, options):
    base = options.initial_theta or default_initial_theta(data)
    starts = [base.vector]
    for k in range(options.restarts):
        rng = np.random.default_rng(np.random.SeedSequence(options.seed, spawn_key=(k,)))
        eta = base.eta + rng.uniform(-1.0, 1.0, base.n_times)
        alpha = rng.uniform(-0.05, 0.05, base.n_factors)
        starts.append(np.concatenate([eta, alpha]))
    return starts


def _better(a, b):
    """Whether run ``a`` beats the incumbent ``b``."""
    if b is None:
        return True
    if not math.isfinite(a.f):
        return False
    if not math.isfinite(b.f):
        return True
    tol = 1e-12 * max(1.0, abs(b.f))
    if a.f < b.f - tol:
        return True
    if abs(a.f - b.f) <= tol:
        return a.gnorm < b.gnorm
    return False


def fit(data, beta, options=None):
    """Weighted minimum DPD estimate of ``(eta, alpha)``.

    Runs a BFGS quasi-Newton minimisation with backtracking line search,
    finished by Newton steps on the gradient when the line search stalls,
    from the default starting point and ``options.restarts`` seeded random
    perturbations of it.  The run with the smallest final objective wins
    (ties: smaller gradient norm, then earlier start).  The result is
    deterministic given ``data`` and ``options``.

    Parameters
    ----------
    data : DeviceData
    beta : float
        Tuning parameter; 0 gives the maximum likelihood estimator.
    options : FitOptions, optional

    Returns
    -------
    FitResult
        ``converged`` is False when no start reached the gradient tolerance
        within ``max_iterations``, or when the winning point sits on a flat
        region created by probability clamping.
    """
    beta = check_beta(beta)
    options = options or FitOptions()
    plan = data.plan
    I = plan.n_times
    X = np.ascontiguousarray(plan.stress_levels)
    Kc = np.ascontiguousarray(plan.group_sizes, dtype=float)
    n = np.ascontiguousarray(data.failures, dtype=float)

    def fg(v):
        return kernels.objective_gradient(v[:I], v[I:], X, Kc, n, beta)

    def info(v):
        return kernels.information_matrices(v[:I], v[I:], X, Kc, beta)

    notes = []
    informative = int(np.count_nonzero(plan.group_sizes))
    if informative < I + plan.n_factors:
        notes.append(
            f"only {informative} nonempty cells for {I + plan.n_factors} parameters; "
            "the estimate is not identified"
        )
    if data.is_boundary():
        notes.append("every cell has n equal to 0 or K; estimates may drift to the boundary")
    for msg in notes:
        log.warning(msg)

    best, best_k = None, 0
    for k, x0 in enumerate(_starts(data, options)):
        with np.errstate(all="ignore"):
            h0 = _inverse_scoring(info, x0, beta)
            run = _bfgs(fg, x0, h0, options.gradient_tolerance, options.max_iterations)
            if not run.converged and math.isfinite(run.f):
                run = _polish(fg, run, options.gradient_tolerance, options.max_iterations)
        if _better(run, best):
            best, best_k = run, k

    # exp(-exp(eta)) below ~1e-10 makes gamma(eta) == 1 to working precision
    flat = np.flatnonzero((best.x[:I] > 3.1) | (best.x[:I] < -23.0))
    if flat.size:
        msg = (
            "estimate lies on the boundary of the parameter space "
            f"(eta{', eta'.join(str(u + 1) for u in flat)}); the sandwich covariance is singular there"
        )
        log.warning(msg)
        notes.append(msg)
    converged = best.converged
    if converged and _on_clamp_plateau(data, best.x, I):
        # the clamp zeroes the gradient; a cell with 0 < n < K cannot be fitted by pi = 0 or 1
        msg = (
            "optimizer stopped where some model probabilities hit the 1e-12 clamp although the "
            "observed fraction is interior; this is a flat region, not a minimum"
        )
        log.warning(msg)
        notes.append(msg)
        converged = False
    if not converged:
        log.info("fit at beta=%g did not reach gradient tolerance (max|g|=%.3g)", beta, best.gnorm)
    return FitResult(
        theta_hat=ThetaParams.from_vector(best.x, I),
        beta=beta,
        objective=float(best.f),
        gradient_norm=best.gnorm,
        converged=converged,
        iterations=best.iterations,
        data_summary=data.shape_summary,
        gradient_tolerance=options.gradient_tolerance,
        start_index=best_k,
        trace=tuple(best.trace),
        warnings=tuple(notes),
    )
