"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat N]

Times single objective/gradient and information-matrix evaluations on the
Electric Current data and on a larger synthetic plan, then full fits with
each backend swapped in.
"""

import argparse
import timeit

import numpy as np

from oneshot import estimation, kernels
from oneshot.io import electric_current
from oneshot.model import DeviceData, TestPlan, ThetaParams, reliability_matrix


def synthetic(I=8, S=12, J=3, seed=1):
    rng = np.random.default_rng(seed)
    plan = TestPlan(np.arange(1.0, I + 1), rng.uniform(0, 2, (S, J)), rng.integers(20, 80, (I, S)))
    theta = ThetaParams(np.r_[np.full(I - 1, 1.5), -1.0], rng.normal(0, 0.2, J))
    n = rng.binomial(plan.group_sizes, 1.0 - reliability_matrix(theta, plan))
    return DeviceData(plan, n), theta


def per_call(mod, data, theta, beta, repeat):
    X = np.ascontiguousarray(data.plan.stress_levels)
    K = np.ascontiguousarray(data.plan.group_sizes, dtype=float)
    n = np.ascontiguousarray(data.failures, dtype=float)
    og = min(timeit.repeat(lambda: mod.objective_gradient(theta.eta, theta.alpha, X, K, n, beta),
                           number=repeat, repeat=5)) / repeat
    im = min(timeit.repeat(lambda: mod.information_matrices(theta.eta, theta.alpha, X, K, beta),
                           number=repeat, repeat=5)) / repeat
    return og, im


def fit_time(mod, data, beta, repeat):
    saved = kernels.objective_gradient, kernels.information_matrices
    kernels.objective_gradient, kernels.information_matrices = mod.objective_gradient, mod.information_matrices
    try:
        return min(timeit.repeat(lambda: estimation.fit(data, beta), number=repeat, repeat=3)) / repeat
    finally:
        kernels.objective_gradient, kernels.information_matrices = saved


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    backends = {"python": kernels.load_backend("python")}
    try:
        backends["cython"] = kernels.load_backend("cython")
    except ImportError:
        print("compiled backend not built; timing the numpy backend only")
    ec = electric_current()
    cases = [("electric current", ec, ThetaParams([0.1, 0.5, -2.2], [0.02, 0.02])), ("synthetic 8x12x3", *synthetic())]
    print(f"{'case':<18}{'backend':<9}{'obj+grad us':>13}{'J,K us':>10}{'fit ms':>9}")
    for name, data, theta in cases:
        for label, mod in backends.items():
            og, im = per_call(mod, data, theta, 0.5, args.repeat)
            ft = fit_time(mod, data, 0.5, max(1, args.repeat // 50))
            print(f"{name:<18}{label:<9}{og * 1e6:>13.1f}{im * 1e6:>10.1f}{ft * 1e3:>9.1f}")


if __name__ == "__main__":
    main()
