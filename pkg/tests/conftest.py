import numpy as np
import pytest

from oneshot.estimation import fit
from oneshot.io import electric_current
from oneshot.model import DeviceData, TestPlan, ThetaParams, reliability_matrix


@pytest.fixture(scope="session")
def ec():
    return electric_current()


@pytest.fixture(scope="session")
def ec_fit0(ec):
    return fit(ec, 0.0)


@pytest.fixture(scope="session")
def ec_fit05(ec):
    return fit(ec, 0.5)


def random_theta(rng, I=3, J=2):
    # keeps every cell probability well inside the 1e-12 clamp for stresses in [0, 50]
    return ThetaParams(rng.normal(0.0, 1.0, I), rng.normal(0.0, 0.01, J))


def random_data(rng, I=3, S=4, J=2, kmax=30):
    plan = TestPlan(
        np.sort(rng.uniform(1, 10, I)) + np.arange(I),
        rng.uniform(0, 50, (S, J)),
        rng.integers(5, kmax, (I, S)),
    )
    theta = random_theta(rng, I, J)
    n = rng.binomial(plan.group_sizes, 1.0 - reliability_matrix(theta, plan))
    return DeviceData(plan, n), theta


def exact_data(plan, theta, scale=1):
    """Counts rounded from the model's expected failures."""
    K = plan.group_sizes * scale
    big = TestPlan(plan.inspection_times, plan.stress_levels, K)
    n = np.rint(K * (1.0 - reliability_matrix(theta, plan))).astype(np.int64)
    return DeviceData(big, n)
