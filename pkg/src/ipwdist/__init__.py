"""Propensity-weighted estimation of treated and control outcome distributions."""

from .data import Arm, DataError, Observation, Sample, Schema, ValidationReport, emit_csv, ingest_csv, validate
from .ecdf import (
    PiecewiseLinearCdf,
    WeightedEcdf,
    ate,
    cdf_eval,
    estimate_cdf,
    hajek_weights,
    naive_mean_diff,
    qte,
    quantile,
    sup_distance,
)
from .propensity import PropensityModel, SieveBasis, build_basis, fit_propensity, predict, select_basis_cv
from .simulation import MonteCarloConfig, MonteCarloReport, ScenarioSpec, exact_cdf, exact_truths, generate, run_monte_carlo
from .subsampling import (
    ConfidenceBand,
    DominanceReport,
    SubsamplingDistribution,
    ci_functional,
    confidence_band,
    dominance_test,
    draw_subsample,
    root_distribution,
)
from .wilcoxon import (
    KernelRegressionFit,
    WilcoxonReport,
    kernel_regress,
    test_equality_normal,
    test_equality_subsampling,
    theta01,
    variance_estimate,
)

__version__ = "0.1.0"
