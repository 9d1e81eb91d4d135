import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oneshot.errors import DomainError, EmptyCellError, UnsupportedTimeError, ValidationError
from oneshot.model import (
    DeviceData,
    ProbPair,
    TestPlan,
    ThetaParams,
    WeibullTruth,
    cell_prob_pair,
    cell_reliability,
    cumulative_G,
    empirical_prob_pair,
    gamma_from_eta,
    inspection_index,
    log1m_G,
    reliability_at_time,
    reliability_matrix,
    stress_multiplier,
    weibull_to_ph,
)

PLAN = TestPlan([2.0, 5.0, 8.0], [(55, 70), (55, 100), (85, 70), (85, 100)], np.full((3, 4), 10))


def test_gamma_values():
    assert gamma_from_eta(0.0) == pytest.approx(0.6321206, abs=1e-7)
    assert gamma_from_eta(math.log(math.log(2))) == pytest.approx(0.5, abs=1e-15)
    # mpmath, 30 digits
    assert gamma_from_eta(-3.92056) == pytest.approx(0.0196346658542821, rel=1e-12)


def test_gamma_rejects_nonfinite():
    with pytest.raises(DomainError):
        gamma_from_eta(float("nan"))


def test_cumulative_G():
    assert cumulative_G([0.0], 0) == pytest.approx(0.6321206, abs=1e-7)
    assert cumulative_G([0.0, 0.0], 0) == pytest.approx(0.399576400893728, rel=1e-12)
    eta = [-0.66688, -0.01304, -3.92056]
    assert cumulative_G(eta, 2) == pytest.approx(0.0196346658542821, rel=1e-12)
    assert cumulative_G(eta, 0) < cumulative_G(eta, 1) < cumulative_G(eta, 2)
    with pytest.raises(IndexError):
        cumulative_G(eta, 3)


def test_stress_multiplier():
    assert stress_multiplier([0, 0], [55, 70]) == 1.0
    assert stress_multiplier([0.03, 0.03], [25, 35]) == pytest.approx(6.04964746441295, rel=1e-13)
    assert stress_multiplier([0.023, 0.018], [55, 70]) == pytest.approx(12.4908952636068, rel=1e-13)
    with pytest.raises(ValidationError):
        stress_multiplier([0.1], [1, 2])


def test_reliability_alpha_zero_is_baseline():
    th = ThetaParams([0.3, -0.2, -1.0], [0.0, 0.0])
    for i in range(3):
        assert cell_reliability(th, i, [55, 70]) == pytest.approx(1 - cumulative_G(th.eta, i), rel=1e-14)


def test_prob_pairs():
    pp = cell_prob_pair(ThetaParams([0.0], [0.0]), TestPlan([1.0], [[1.0]], [[5]]), 0, 0)
    assert (pp.p1, pp.p2) == pytest.approx((0.6321206, 0.3678794), abs=1e-7)
    data = DeviceData(PLAN, np.array([[4, 0, 10, 1]] * 3))
    assert tuple(empirical_prob_pair(data, 0, 0)) == pytest.approx((0.4, 0.6))
    assert tuple(empirical_prob_pair(data, 0, 1)) == (0.0, 1.0)
    assert tuple(empirical_prob_pair(data, 0, 2)) == (1.0, 0.0)


def test_empty_cell():
    plan = TestPlan([1.0, 2.0], [[1.0]], [[0], [3]])
    data = DeviceData(plan, [[0], [1]])
    with pytest.raises(EmptyCellError):
        empirical_prob_pair(data, 0, 0)


def test_probpair_validation():
    with pytest.raises(DomainError):
        ProbPair(0.3, 0.6)
    with pytest.raises(DomainError):
        ProbPair(-0.1, 1.1)


def test_plan_validation():
    with pytest.raises(ValidationError):
        TestPlan([2.0, 1.0], [[1.0]], [[1], [1]])
    with pytest.raises(ValidationError):
        TestPlan([1.0], [[1.0]], [[0]])
    with pytest.raises(ValidationError):
        TestPlan([1.0], [[1.0]], [[1.5]])
    with pytest.raises(ValidationError):
        DeviceData(TestPlan([1.0], [[1.0]], [[3]]), [[4]])
    assert PLAN.scaled(3).total == 360


def test_theta_is_immutable():
    th = ThetaParams([0.1, 0.2], [0.3])
    with pytest.raises(ValueError):
        th.eta[0] = 1.0
    assert ThetaParams.from_vector(th.vector, 2) == th
    assert th.names() == ["eta1", "eta2", "alpha1"]


@pytest.mark.parametrize(
    "b, c0, eta, alpha",
    [
        (0.0, 6.0, (-0.66688, -0.01304, -3.92056), 0.03),
        (0.5, 6.0, (-1.38827, -0.48138, -6.46391), 0.04946),
        (0.5, 6.5, (-1.38845, -0.48171, -7.28827), 0.04946),
    ],
)
def test_weibull_to_ph_examples(b, c0, eta, alpha):
    th = weibull_to_ph(WeibullTruth(b, c0, [-0.03, -0.03]), PLAN)
    assert th.eta == pytest.approx(eta, abs=1e-5)
    assert th.alpha == pytest.approx([alpha, alpha], abs=1e-5)


@settings(max_examples=60, deadline=None)
@given(
    b=st.floats(-1.0, 1.0),
    c0=st.floats(2.0, 8.0),
    c1=st.floats(-0.05, 0.0),
    c2=st.floats(-0.05, 0.0),
)
def test_weibull_round_trip(b, c0, c1, c2):
    truth = WeibullTruth(b, c0, [c1, c2])
    th = weibull_to_ph(truth, PLAN)
    for i, t in enumerate(PLAN.inspection_times):
        for s, x in enumerate(PLAN.stress_levels):
            # log scale: deep-tail R underflows and amplifies exponent rounding
            log_r = math.exp(float(th.alpha @ np.asarray(x))) * log1m_G(th.eta, i)
            log_surv = -((t / truth.scale(x)) ** truth.shape)
            assert log_r == pytest.approx(log_surv, rel=1e-11, abs=1e-13)


def test_reliability_at_time():
    truth = WeibullTruth(0.0, 6.0, [-0.03, -0.03])
    assert reliability_at_time(truth, 15, [25, 35]) == pytest.approx(0.79857, abs=1e-5)
    th = weibull_to_ph(truth, PLAN)
    assert reliability_at_time(th, 5.0, [25, 35], PLAN) == pytest.approx(cell_reliability(th, 1, [25, 35]))
    assert reliability_at_time(th, 5.0, [25, 35], PLAN) == pytest.approx(truth.survival(5.0, [25, 35]), rel=1e-10)
    with pytest.raises(UnsupportedTimeError):
        reliability_at_time(th, 15, [25, 35], PLAN)
    with pytest.raises(ValidationError):
        reliability_at_time(th, 5.0, [25, 35])
    assert inspection_index(PLAN, 8) == 2


def test_reliability_matrix_matches_scalar():
    rng = np.random.default_rng(3)
    for _ in range(20):
        th = ThetaParams(rng.normal(0, 1.5, 3), rng.normal(0, 0.03, 2))
        R = reliability_matrix(th, PLAN)
        for i in range(3):
            for s in range(4):
                assert R[i, s] == pytest.approx(cell_reliability(th, i, PLAN.stress_levels[s]), rel=1e-12)


def test_time_monotonicity_random():
    rng = np.random.default_rng(11)
    x = np.array([40.0, 60.0])
    for _ in range(1000):
        th = ThetaParams(rng.normal(0, 2.0, 4), rng.normal(0, 0.05, 2))
        r = [cell_reliability(th, i, x) for i in range(4)]
        assert all(0.0 <= v <= 1.0 for v in r)
        assert all(a >= b for a, b in zip(r, r[1:]))
        # strict wherever the gap is resolvable in double precision
        for i in range(3):
            if gamma_from_eta(th.eta[i]) < 1.0 - 1e-6 and 1e-12 < r[i + 1] and r[i] < 1 - 1e-6:
                assert r[i] > r[i + 1]


@given(st.floats(-30, 3), st.floats(1e-6, 2))
def test_gamma_increasing(e, d):
    assert gamma_from_eta(e + d) >= gamma_from_eta(e)
