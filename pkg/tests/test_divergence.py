import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_data, random_theta
from oneshot.divergence import (
    check_beta,
    dpd,
    dpd_reduced,
    kl_divergence,
    log_likelihood,
    weighted_objective,
)
from oneshot.errors import DomainError
from oneshot.model import DeviceData, ProbPair, TestPlan, ThetaParams, cell_prob_pair

P = ProbPair.from_failure


def test_kl_examples():
    assert kl_divergence(P(0.4), P(0.4)) == 0.0
    assert kl_divergence(P(1.0), P(0.5)) == pytest.approx(math.log(2))
    # mpmath, 30 digits
    assert kl_divergence(P(0.4), P(0.5)) == pytest.approx(0.0201355135506889, rel=1e-12)
    assert kl_divergence(P(0.3), P(0.0)) == math.inf


def test_dpd_examples():
    assert dpd(P(0.3), P(0.3), 0.7) == pytest.approx(0.0, abs=1e-15)
    assert dpd(P(1.0), P(0.5), 1.0) == pytest.approx(0.5)
    assert dpd_reduced(P(1.0), P(0.5), 1.0) == pytest.approx(-0.5)
    assert dpd(P(0.4), P(0.5), 0.0) == kl_divergence(P(0.4), P(0.5))


def test_dpd_reduced_beta_zero_rejected():
    with pytest.raises(DomainError):
        dpd_reduced(P(0.4), P(0.5), 0.0)


@pytest.mark.parametrize("bad", [-0.1, float("nan"), float("inf")])
def test_check_beta(bad):
    with pytest.raises(DomainError):
        check_beta(bad)


@given(st.floats(0.0, 1.0), st.floats(0.05, 0.95))
def test_dpd_continuity_at_zero(p, q):
    assert abs(dpd(P(p), P(q), 1e-6) - kl_divergence(P(p), P(q))) <= 1e-5


@given(st.floats(0.0, 1.0), st.floats(0.01, 0.99), st.floats(1e-3, 3.0))
def test_dpd_nonnegative(p, q, beta):
    assert dpd(P(p), P(q), beta) >= -1e-12
    assert kl_divergence(P(p), P(q)) >= -1e-15


@given(st.floats(0.0, 1.0), st.floats(0.01, 0.99), st.floats(0.01, 0.99), st.floats(1e-3, 2.0))
def test_reduced_offset_is_pi_free(p, q1, q2, beta):
    d1 = dpd(P(p), P(q1), beta) - dpd_reduced(P(p), P(q1), beta)
    d2 = dpd(P(p), P(q2), beta) - dpd_reduced(P(p), P(q2), beta)
    assert d1 == pytest.approx(d2, abs=1e-12)


def _objective_direct(data, theta, beta, full=False):
    plan = data.plan
    total = 0.0
    for (i, s), k in np.ndenumerate(plan.group_sizes):
        if k == 0:
            continue
        ph = P(data.failures[i, s] / k)
        pi = cell_prob_pair(theta, plan, i, s)
        if beta == 0:
            d = kl_divergence(ph, pi)
        else:
            d = dpd(ph, pi, beta) if full else dpd_reduced(ph, pi, beta)
        total += k / plan.total * d
    return total


@pytest.mark.parametrize("beta", [0.0, 0.25, 0.8])
def test_weighted_objective_matches_cellwise(beta):
    rng = np.random.default_rng(5)
    for _ in range(10):
        data, _ = random_data(rng)
        th = random_theta(rng)
        assert weighted_objective(data, th, beta) == pytest.approx(_objective_direct(data, th, beta), rel=1e-11, abs=1e-13)


def test_full_and_reduced_objective_differ_by_constant():
    rng = np.random.default_rng(8)
    data, _ = random_data(rng)
    diffs = []
    for _ in range(10):
        th = random_theta(rng)
        diffs.append(_objective_direct(data, th, 0.4, full=True) - weighted_objective(data, th, 0.4))
    assert max(diffs) - min(diffs) < 1e-12


def test_kl_objective_and_loglik_differ_by_constant():
    rng = np.random.default_rng(9)
    for _ in range(5):
        data, _ = random_data(rng)
        vals = []
        for _ in range(10):
            th = random_theta(rng)
            vals.append(data.plan.total * weighted_objective(data, th, 0.0) + log_likelihood(data, th))
        assert max(vals) - min(vals) < 1e-8


def test_objective_skips_empty_cells():
    plan = TestPlan([1.0, 2.0], [[1.0], [2.0]], [[4, 0], [4, 4]])
    data = DeviceData(plan, [[1, 0], [2, 3]])
    th = ThetaParams([0.1, -0.5], [0.2])
    assert weighted_objective(data, th, 0.5) == pytest.approx(_objective_direct(data, th, 0.5), rel=1e-12)


def test_perfect_fit_is_minimum():
    th = ThetaParams([0.2, -0.4], [0.1])
    plan = TestPlan([1.0, 2.0], [[0.0], [1.0]], [[1000, 1000], [1000, 1000]])
    from oneshot.model import reliability_matrix

    n = np.rint(1000 * (1 - reliability_matrix(th, plan))).astype(int)
    data = DeviceData(plan, n)
    base = weighted_objective(data, th, 0.5)
    rng = np.random.default_rng(1)
    for _ in range(20):
        other = ThetaParams(th.eta + rng.normal(0, 0.05, 2), th.alpha + rng.normal(0, 0.05, 1))
        assert weighted_objective(data, other, 0.5) >= base - 1e-6


def test_objective_clamps_probabilities():
    plan = TestPlan([1.0], [[0.0]], [[10]])
    data = DeviceData(plan, [[3]])
    # gamma(40) == 1 so the model failure probability is exactly 1
    th = ThetaParams([40.0], [0.0])
    val = weighted_objective(data, th, 0.0)
    assert math.isfinite(val)
    assert val == pytest.approx(0.3 * math.log(0.3) + 0.7 * math.log(0.7 / 1e-12), rel=1e-9)
