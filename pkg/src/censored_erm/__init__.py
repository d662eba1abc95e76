"""Regression under random right censoring with inverse-probability-of-censoring weights.

The censoring survival function ``S_C(t | x)`` is estimated by a
kernel-smoothed (Beran) or k-NN product-limit estimator, turned into
per-observation weights, and plugged into weighted empirical risk
minimization.
"""

from .censoring import (
    CensoringEstimator,
    ConditionalSubsurvivalEstimate,
    fit_censoring_estimator,
    fit_conditional_subsurvival,
    fit_loo_censoring_estimators,
)
from .data import (
    CensoredDataset,
    CensoredObservation,
    RestrictionDomain,
    StepSurvivalFunction,
    ValidationError,
    evaluate,
    left_limit,
    read_csv,
    write_csv,
)
from .experiments import ExperimentConfig, ExperimentResult, run, summarize
from .kernels import KernelSpec, default_bandwidth, kernel_value, scaled_kernel_value
from .learners import LearnerSpec, NumericalError, fit, predict
from .metrics import EvaluationReport, UndefinedMetric, concordance_index, l2_test_error, risk_estimation_error
from .risk import LOSS_VARIANTS, WeightVector, compute_weights, linear_risk_estimate, weighted_risk
from .synthetic import CalibrationError, CoxModel, calibrate_lambda, generate, generate_dataset

__version__ = "0.1.0"
