"""Robust weighted minimum density power divergence inference for one-shot device data."""

__version__ = "0.1.0"

import logging

logging.getLogger(__name__).addHandler(logging.NullHandler())

from .adequacy import (  # noqa: E402
    GofResult,
    TuningSelection,
    distance_statistic,
    exact_pvalue,
    goodness_of_fit,
    mse_hat,
    select_beta_distance,
    select_beta_wj,
)
from .divergence import dpd, dpd_reduced, kl_divergence, log_likelihood, weighted_objective  # noqa: E402
from .errors import *  # noqa: E402,F401,F403
from .estimation import FitOptions, FitResult, fit, objective_gradient  # noqa: E402
from .inference import SandwichCov, ReliabilityCI, ci_logit, ci_plain, reliability_se, sandwich_sigma  # noqa: E402
from .model import (  # noqa: E402
    DeviceData,
    ProbPair,
    TestPlan,
    ThetaParams,
    WeibullTruth,
    cell_reliability,
    reliability_at_time,
    weibull_to_ph,
)
from .wald import AffineConstraint, WaldResult, power_approx, power_sigma, wald_statistic  # noqa: E402
from .io import electric_current, parse_device_csv, read_device_table, write_device_csv  # noqa: E402
from .simulation import (  # noqa: E402
    SimDesign,
    balanced_design,
    generate_dataset,
    mc_bias_mse,
    mc_level_power,
    unbalanced_design,
)
