"""Bayesian hierarchical Gaussian spatial regression.

Marginalized full-rank fits, low-rank predictive-process fits, composition
recovery of slopes and spatial effects, posterior predictive sampling, and a
dynamic spatio-temporal model, all driven by Cholesky factorizations and
triangular solves.
"""

__version__ = "0.1.0"

from .covariance import (
    CovFamily,
    ProcessParams,
    correlation,
    cov_matrix,
    cross_cov,
    effective_range_to_phi,
    pairwise_distances,
)
from .dynamic import (
    DynamicDataset,
    DynamicPriors,
    DynamicStarting,
    fit_dynamic,
)
from .fullrank import FullRankFit, ThetaChain, fit_full_rank
from .linalg import CholFactor, chol, log_det_from_chol, mvn_draw, trsolve
from .lowrank import LowRankFit, build_pp_structure, fit_lowrank, swm_apply
from .model import (
    BetaPrior,
    KnotSpec,
    SamplerOptions,
    ScalarPrior,
    SpatialDataset,
    ThetaSpec,
    build_knots,
)
from .predict import PredictionRequest, predict
from .recover import RecoveredSamples, recover

__all__ = [
    "__version__",
    "BetaPrior",
    "CholFactor",
    "CovFamily",
    "DynamicDataset",
    "DynamicPriors",
    "DynamicStarting",
    "FullRankFit",
    "KnotSpec",
    "LowRankFit",
    "PredictionRequest",
    "ProcessParams",
    "RecoveredSamples",
    "SamplerOptions",
    "ScalarPrior",
    "SpatialDataset",
    "ThetaChain",
    "ThetaSpec",
    "build_knots",
    "build_pp_structure",
    "chol",
    "correlation",
    "cov_matrix",
    "cross_cov",
    "effective_range_to_phi",
    "fit_dynamic",
    "fit_full_rank",
    "fit_lowrank",
    "log_det_from_chol",
    "mvn_draw",
    "pairwise_distances",
    "predict",
    "recover",
    "swm_apply",
    "trsolve",
]
