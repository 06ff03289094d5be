"""Smooth empirical copulas and their resampling.

Submodules
----------
data
    Samples, ranks, the empirical copula, Kendall's tau and CSV input.
models
    Independence, Clayton, Gumbel-Hougaard and Frank copulas.
smoothing
    Smoothing families (Dirac, binomial, beta-binomial) and smooth
    empirical copulas.
bootstrap
    Sampling from smooth empirical copulas and bootstrap intervals.
multiplier
    Multiplier sequences and sequential multiplier replicates.
derivatives
    Estimators of first-order partial derivatives and the IMSE harness.
changepoint
    Change-point test for the copula of a multivariate time series.
cli
    Command-line driver for the Monte Carlo experiments.
"""

from .bootstrap import (ci_frank_mpl, ci_kendall, coverage_study, draw_bootstrap_sample,
                        draw_bootstrap_samples, frank_mpl_fit, invert_margin, margin_quantile_invert)
from .changepoint import (Ar1Config, ChangePointResult, generate_ar1, p_value, rejection_rates,
                          replicate_S, run_test, statistic_S)
from .data import (RankMatrix, Sample, compute_ranks, empirical_copula_eval, kendall_tau,
                   pseudo_observations, read_sample_csv, write_sample_csv)
from .derivatives import (Bandwidth, BernsteinDegree, PdEstimatorSpec, adaptive_bandwidth,
                          adaptive_bernstein_degree, imse, ise_study, pd_bernstein, pd_eval)
from .errors import (BandwidthError, ConfigError, DataError, DomainError, OptimFailure, RangeError,
                     SmoothCopError, TieError, ToleranceError, UnsupportedFamilyError, WindowError)
from .models import CopulaModel, Family, tau_to_theta, theta_to_tau
from .multiplier import (MultiplierConfig, SequentialWindow, covariance_study, gen_multipliers,
                         quantile_study, replicate_B, replicate_C)
from .smoothing import (SmoothEmpiricalCopula, SmoothingFamily, beta_binomial_survival,
                        beta_binomial_survival_t, beta_copula_closed_form, binomial_survival,
                        kernel_K, smooth_eval)

__version__ = "0.1.0"

__all__ = [
    "Ar1Config", "Bandwidth", "BandwidthError", "BernsteinDegree", "ChangePointResult", "ConfigError",
    "CopulaModel", "DataError", "DomainError", "Family", "MultiplierConfig", "OptimFailure",
    "PdEstimatorSpec", "RangeError", "RankMatrix", "Sample", "SequentialWindow", "SmoothCopError",
    "SmoothEmpiricalCopula", "SmoothingFamily", "TieError", "ToleranceError", "UnsupportedFamilyError",
    "WindowError", "adaptive_bandwidth", "adaptive_bernstein_degree", "beta_binomial_survival",
    "beta_binomial_survival_t", "beta_copula_closed_form", "binomial_survival", "ci_frank_mpl",
    "ci_kendall", "compute_ranks", "covariance_study", "coverage_study", "draw_bootstrap_sample",
    "draw_bootstrap_samples", "empirical_copula_eval", "frank_mpl_fit", "gen_multipliers",
    "generate_ar1", "imse", "invert_margin", "ise_study", "kendall_tau", "kernel_K",
    "margin_quantile_invert", "p_value", "pd_bernstein", "pd_eval", "pseudo_observations",
    "quantile_study", "read_sample_csv", "rejection_rates", "replicate_B", "replicate_C",
    "replicate_S", "run_test", "smooth_eval", "statistic_S", "tau_to_theta", "theta_to_tau",
    "write_sample_csv",
]
