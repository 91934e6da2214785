"""Arms of the allocation problem: iid unbiased estimators with costs."""

from .ais import (
    AISEstimator,
    AISSpec,
    Dataset,
    GaussianToy,
    LogisticRegressionTarget,
    ais_draw,
    ais_log_weights,
    ais_schedule,
    load_dataset_csv,
    logistic_posterior_grad,
    logistic_posterior_logdensity,
    slice_sample_step,
    slice_sweep,
    synthetic_logistic_dataset,
)
from .base import CostModel, DrawBuffer, Estimator, Observation
from .cir import (
    CIRCaplet,
    CIRSpec,
    cir_arms,
    cir_importance_weight,
    cir_payoff,
    deterministic_price,
    mixture_payoffs,
    simulate_cir_path,
    theta_grid,
)
from .synthetic import Constant, Gaussian, ScaledBernoulli, ScaledBernoulliSpec, sample_scaled_bernoulli
