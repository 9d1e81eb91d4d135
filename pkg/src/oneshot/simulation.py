"""Monte Carlo experiments with Weibull-generated one-shot device data.

Cell counts are drawn directly as ``Binomial(K_is, F(IT_i; x_s))``; an
optional outlying cell is generated from a perturbed Weibull model.  Every
cell of every replicate draws from its own stream keyed by
``(seed, stream, replicate, i, s)``, so results do not depend on the order
or the number of workers.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .divergence import check_beta
from .errors import EstimationPrecisionError, OneShotError, ValidationError
from .estimation import FitOptions, fit
from .inference import sandwich_sigma
from .model import DeviceData, TestPlan, WeibullTruth, reliability_at_time, weibull_to_ph
from .special import chisq_quantile
from .wald import AffineConstraint, wald_statistic

log = logging.getLogger(__name__)

DEFAULT_SEED = 20240601
STRESSES = ((55.0, 70.0), (55.0, 100.0), (85.0, 70.0), (85.0, 100.0))
INSPECTION_TIMES = (2.0, 5.0, 8.0)
NORMAL_CONDITION = (25.0, 35.0)
REPORT_TIME = 15.0
# zero-based (third inspection time, fourth condition)
OUTLYING_CELL = (2, 3)
PAIRED_B_TILDE = {0.0: 0.05, 0.5: 0.45}
NULL_ALPHA1 = 0.04946

_NULL_STREAM = 0
_ALT_STREAM = 1


@dataclass(frozen=True, eq=False)
class Contamination:
    cell: tuple
    truth_tilde: WeibullTruth

    def as_dict(self):
        return {"cell": list(self.cell), "truth_tilde": self.truth_tilde.as_dict()}


@dataclass(frozen=True, eq=False)
class SimDesign:
    """A Monte Carlo experiment: plan, Weibull truth, optional outlying cell."""

    plan: TestPlan
    truth: WeibullTruth
    contamination: Contamination | None = None
    replicates: int = 100
    betas: tuple = (0.0,)
    seed: int = DEFAULT_SEED
    normal_condition: tuple = NORMAL_CONDITION
    report_time: float = REPORT_TIME
    label: str = ""

    def __post_init__(self):
        if int(self.replicates) < 1:
            raise ValidationError("replicates must be at least 1")
        object.__setattr__(self, "replicates", int(self.replicates))
        betas = tuple(check_beta(b) for b in self.betas)
        if not betas:
            raise ValidationError("at least one tuning parameter is required")
        object.__setattr__(self, "betas", betas)
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "seed", int(self.seed))
        if self.truth.c.shape[0] != self.plan.n_factors:
            raise ValidationError("truth has a different number of stress factors than the plan")
        x0 = tuple(float(v) for v in self.normal_condition)
        if len(x0) != self.plan.n_factors:
            raise ValidationError("normal_condition needs one value per stress factor")
        object.__setattr__(self, "normal_condition", x0)
        if not float(self.report_time) > 0:
            raise ValidationError("report_time must be positive")
        c = self.contamination
        if c is not None:
            i, s = c.cell
            if not (0 <= i < self.plan.n_times and 0 <= s < self.plan.n_conditions):
                raise ValidationError(f"contaminated cell {c.cell} is outside the plan")
            if c.truth_tilde.c.shape[0] != self.plan.n_factors:
                raise ValidationError("contaminating truth has the wrong number of stress factors")

    def true_theta(self):
        return weibull_to_ph(self.truth, self.plan)

    def true_report_reliability(self):
        return reliability_at_time(self.truth, self.report_time, self.normal_condition)

    def as_dict(self):
        p = self.plan
        return {
            "label": self.label,
            "inspection_times": p.inspection_times.tolist(),
            "stress_levels": p.stress_levels.tolist(),
            "group_sizes": p.group_sizes.tolist(),
            "truth": self.truth.as_dict(),
            "contamination": None if self.contamination is None else self.contamination.as_dict(),
            "replicates": self.replicates,
            "betas": list(self.betas),
            "seed": self.seed,
            "normal_condition": list(self.normal_condition),
            "report_time": self.report_time,
        }


def _failure_matrix(design, truth):
    plan = design.plan
    F = np.empty(plan.group_sizes.shape)
    for (i, s), _ in np.ndenumerate(F):
        model = truth
        c = design.contamination
        if c is not None and (i, s) == tuple(c.cell):
            model = c.truth_tilde
        F[i, s] = model.cdf(plan.inspection_times[i], plan.stress_levels[s])
    return F


def generate_dataset(design, replicate_index, truth=None, stream=_NULL_STREAM):
    """Draw one replicate.

    ``truth`` overrides ``design.truth`` for the regular cells (used for
    power runs); the outlying cell always uses the contaminating truth.
    Different ``stream`` values give independent data for the same replicate.
    """
    truth = truth or design.truth
    F = _failure_matrix(design, truth)
    K = design.plan.group_sizes
    n = np.zeros(K.shape, dtype=np.int64)
    for (i, s), kis in np.ndenumerate(K):
        ss = np.random.SeedSequence(design.seed, spawn_key=(stream, replicate_index, i, s))
        n[i, s] = np.random.default_rng(ss).binomial(int(kis), F[i, s])
    return DeviceData(design.plan, n)


def balanced_design(K_cell, b, c0, contaminated, replicates=100, betas=(0.0,), seed=DEFAULT_SEED):
    """Equal group sizes on the four-condition, three-time design.

    The outlying cell is the last condition at the last inspection time,
    generated with ``c_tilde = (-0.027, -0.027)`` and a shape perturbation
    paired with ``b`` (0 -> 0.05, 0.5 -> 0.45).
    """
    K = np.full((len(INSPECTION_TIMES), len(STRESSES)), int(K_cell))
    plan = TestPlan(INSPECTION_TIMES, STRESSES, K)
    truth = WeibullTruth(float(b), float(c0), [-0.03, -0.03])
    contamination = None
    if contaminated:
        b_tilde = PAIRED_B_TILDE.get(float(b))
        if b_tilde is None:
            raise ValidationError(f"no paired contaminating shape for b={b}; use 0 or 0.5")
        contamination = Contamination(OUTLYING_CELL, WeibullTruth(b_tilde, float(c0), [-0.027, -0.027]))
    label = f"balanced K={K_cell} b={b} c0={c0}" + (" contaminated" if contaminated else "")
    return SimDesign(plan, truth, contamination, replicates, tuple(betas), seed, label=label)


def unbalanced_design(r, contaminated, replicates=100, betas=(0.0,), seed=DEFAULT_SEED, c0=6.5):
    """Group sizes ``(10r, 15r, 20r, 30r)`` across conditions at every inspection time.

    Truth ``b = 0.5``, ``c = (-0.03, -0.03)``.  The contaminated variant
    changes only ``c_2`` to ``-0.027`` in the outlying cell.
    """
    r = int(r)
    if r < 1:
        raise ValidationError("r must be a positive integer")
    K = np.tile(np.array([10, 15, 20, 30]) * r, (len(INSPECTION_TIMES), 1))
    plan = TestPlan(INSPECTION_TIMES, STRESSES, K)
    truth = WeibullTruth(0.5, float(c0), [-0.03, -0.03])
    contamination = None
    if contaminated:
        contamination = Contamination(OUTLYING_CELL, WeibullTruth(0.5, float(c0), [-0.03, -0.027]))
    label = f"unbalanced r={r}" + (" contaminated" if contaminated else "")
    return SimDesign(plan, truth, contamination, replicates, tuple(betas), seed, label=label)


def default_null_constraint(n_times=3, n_factors=2, value=NULL_ALPHA1):
    """``H0: alpha_1 = value``."""
    return AffineConstraint.coordinate(n_times, value, n_times + n_factors, "alpha1")


def power_alternative(truth=None):
    """Weibull truth with ``c = (-0.032, -0.028)``, i.e. ``alpha_1 = 0.05276`` at ``b = 0.5``."""
    truth = truth or WeibullTruth(0.5, 6.5, [-0.03, -0.03])
    return WeibullTruth(truth.b, truth.c0, [-0.032, -0.028])


def worker_count():
    """Worker processes for Monte Carlo runs, from ``ONESHOT_THREADS`` (default 1)."""
    raw = os.environ.get("ONESHOT_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValidationError(f"ONESHOT_THREADS must be an integer, got {raw!r}") from None


def _map(fn, args, workers):
    workers = worker_count() if workers is None else max(1, int(workers))
    if workers == 1 or len(args) < 2:
        return [fn(a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, args, chunksize=max(1, len(args) // (4 * workers))))


def _bias_replicate(job):
    design, rep, options = job
    data = generate_dataset(design, rep)
    out = []
    for b in design.betas:
        res = fit(data, b, options)
        out.append(res.theta_hat.vector if res.converged else None)
    return out


def _wald_replicate(job):
    design, rep, truth, stream, constraint, level, options = job
    data = generate_dataset(design, rep, truth, stream)
    out = []
    for b in design.betas:
        res = fit(data, b, options)
        if not res.converged:
            out.append(None)
            continue
        try:
            cov = sandwich_sigma(data.plan, res.theta_hat, b)
            w = wald_statistic(res, cov, constraint, level)
        except (EstimationPrecisionError, OneShotError):
            out.append(None)
            continue
        out.append((w.statistic, w.p_value))
    return out


@dataclass(frozen=True, eq=False)
class McSummary:
    """Aggregated Monte Carlo output.

    ``bias`` and ``mse`` map each beta to per-parameter values over converged
    replicates; ``level`` and ``power`` map each beta to rejection rates.
    ``failed`` counts replicates excluded for non-convergence or a singular
    covariance.
    """

    design: SimDesign
    parameter_names: tuple
    true_theta: np.ndarray
    true_report_reliability: float
    used: dict
    failed: dict
    bias: dict = field(default_factory=dict)
    mse: dict = field(default_factory=dict)
    level: dict = field(default_factory=dict)
    power: dict = field(default_factory=dict)
    p_values: dict = field(default_factory=dict)
    test: dict = field(default_factory=dict)

    def as_dict(self):
        key = lambda b: repr(float(b))  # noqa: E731
        out = {
            "design": self.design.as_dict(),
            "parameters": list(self.parameter_names),
            "true_values": dict(zip(self.parameter_names, self.true_theta.tolist())),
            "true_report_reliability": self.true_report_reliability,
            "used": {key(b): v for b, v in self.used.items()},
            "failed": {key(b): v for b, v in self.failed.items()},
        }
        if self.bias:
            out["bias"] = {key(b): dict(zip(self.parameter_names, v)) for b, v in self.bias.items()}
            out["mse"] = {key(b): dict(zip(self.parameter_names, v)) for b, v in self.mse.items()}
        if self.level:
            out["level"] = {key(b): v for b, v in self.level.items()}
        if self.power:
            out["power"] = {key(b): v for b, v in self.power.items()}
        if self.test:
            out["test"] = dict(self.test)
        return out

    def long_rows(self, x_name="beta", x_value=None):
        """Long-format rows ``(x_name, x, series, quantity, value)`` for plotting."""
        rows = []
        for b in self.design.betas:
            series = f"beta={b:g}"
            x = b if x_value is None else x_value
            for name in ("bias", "mse"):
                table = getattr(self, name)
                if b in table:
                    for p, v in zip(self.parameter_names, table[b]):
                        rows.append((x_name, x, series, f"{name}:{p}", v))
            for name in ("level", "power"):
                table = getattr(self, name)
                if b in table:
                    rows.append((x_name, x, series, name, table[b]))
        return rows


def mc_bias_mse(design, options=None, workers=None):
    """Bias and MSE of each parameter estimate, per beta.

    Only replicates whose fit converged enter the averages; the rest are
    counted in ``failed``.  The true reliability at the report time is
    reported alongside but not estimated (the semi-parametric fit does not
    identify it beyond the last inspection time).
    """
    options = options or FitOptions()
    truth = design.true_theta()
    theta_star = truth.vector
    results = _map(_bias_replicate, [(design, r, options) for r in range(design.replicates)], workers)
    bias, mse, used, failed = {}, {}, {}, {}
    for j, b in enumerate(design.betas):
        est = [row[j] for row in results if row[j] is not None]
        used[b] = len(est)
        failed[b] = design.replicates - len(est)
        if failed[b]:
            log.warning("beta=%g: %d replicate fits did not converge", b, failed[b])
        if not est:
            bias[b] = [math.nan] * theta_star.size
            mse[b] = [math.nan] * theta_star.size
            continue
        dev = np.array(est) - theta_star
        bias[b] = [math.fsum(dev[:, k]) / len(est) for k in range(dev.shape[1])]
        mse[b] = [math.fsum(dev[:, k] ** 2) / len(est) for k in range(dev.shape[1])]
    return McSummary(
        design, tuple(truth.names()), theta_star, design.true_report_reliability(),
        used, failed, bias, mse,
    )


def _rejections(design, truth, stream, constraint, level, options, workers):
    jobs = [(design, r, truth, stream, constraint, level, options) for r in range(design.replicates)]
    results = _map(_wald_replicate, jobs, workers)
    crit = chisq_quantile(1.0 - level, constraint.rank)
    rate, used, pvals = {}, {}, {}
    for j, b in enumerate(design.betas):
        stats = [row[j] for row in results if row[j] is not None]
        used[b] = len(stats)
        pvals[b] = [p for _, p in stats]
        rate[b] = sum(w > crit for w, _ in stats) / len(stats) if stats else math.nan
    return rate, used, pvals


def mc_level_power(design, constraint=None, level=0.05, alternative=None, options=None, workers=None):
    """Empirical level and, optionally, power of the Wald-type test.

    The level uses data from ``design`` (including any outlying cell).  When
    ``alternative`` (a :class:`WeibullTruth`) is given, power is the
    rejection rate on independent data whose regular cells follow it; the
    outlying cell, if any, is unchanged.
    """
    options = options or FitOptions()
    constraint = constraint or default_null_constraint(design.plan.n_times, design.plan.n_factors)
    level = float(level)
    if not 0.0 < level < 1.0:
        raise ValidationError("level must lie in (0, 1)")
    lvl, used, pvals = _rejections(design, None, _NULL_STREAM, constraint, level, options, workers)
    failed = {b: design.replicates - used[b] for b in design.betas}
    pw = {}
    if alternative is not None:
        pw, used_alt, _ = _rejections(design, alternative, _ALT_STREAM, constraint, level, options, workers)
        failed = {b: failed[b] + design.replicates - used_alt[b] for b in design.betas}
    for b, nf in failed.items():
        if nf:
            log.warning("beta=%g: %d replicate tests excluded", b, nf)
    truth = design.true_theta()
    test = {
        "L": constraint.L.tolist(),
        "ell": constraint.ell.tolist(),
        "level": level,
        "alternative": None if alternative is None else alternative.as_dict(),
    }
    return McSummary(
        design, tuple(truth.names()), truth.vector, design.true_report_reliability(),
        used, failed, level=lvl, power=pw, p_values=pvals, test=test,
    )


def with_replicates(design, replicates):
    return replace(design, replicates=int(replicates))
