"""Penalized maximum-likelihood model selection for generalized linear models.

Subpackages cover natural exponential families, design-matrix diagnostics,
constrained maximum-likelihood fitting, complexity penalties, subset search
under structural constraints, and a Monte-Carlo Kullback-Leibler risk lab.
"""

from .families import NaturalFamily, CurvatureBounds, make_family, curvature_bounds, kl_divergence
from .design import DesignMatrix, SparseSpectrum, rank_of, sparse_spectrum, weak_collinearity
from .fitter import ModelSpec, FitResult, fit_mle, log_likelihood
from .penalties import PenaltyRule, WeightCertificate, pen_value, weights_certificate, risk_bound_constant
from .selector import ModelFamily, SelectionResult, enumerate_admissible, select_model, greedy_select

__all__ = [
    "NaturalFamily", "CurvatureBounds", "make_family", "curvature_bounds", "kl_divergence",
    "DesignMatrix", "SparseSpectrum", "rank_of", "sparse_spectrum", "weak_collinearity",
    "ModelSpec", "FitResult", "fit_mle", "log_likelihood",
    "PenaltyRule", "WeightCertificate", "pen_value", "weights_certificate", "risk_bound_constant",
    "ModelFamily", "SelectionResult", "enumerate_admissible", "select_model", "greedy_select",
]

__version__ = "0.1.0"
