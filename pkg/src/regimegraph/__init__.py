"""Sparse hidden Markov graphical models with generalized hyperbolic emissions."""

from .ecme import GHHMM, FitConfig, FitError, FitResult, LatentMoments, fit, initialize
from .gh import PRESETS, GhParams, gh_logpdf, gh_sample, mahalanobis_sq, normalize_scale
from .hmm import ChainParams, Posteriors, forward_backward, local_decode, viterbi
from .selection import (EdgeRecovery, SelectionScore, adjusted_rand_index, degrees_of_freedom,
                        edge_recovery, score, select)
from .simulate import random_sparse_precision
from .sparse import GlassoError, PenaltySpec, fit_path, fit_penalized, glasso
from .special import GigParams, gig_moments, gig_sample, log_bessel_k

__version__ = "0.1.0"

__all__ = [
    "GHHMM", "FitConfig", "FitError", "FitResult", "LatentMoments", "fit", "initialize",
    "PRESETS", "GhParams", "gh_logpdf", "gh_sample", "mahalanobis_sq", "normalize_scale",
    "ChainParams", "Posteriors", "forward_backward", "local_decode", "viterbi",
    "EdgeRecovery", "SelectionScore", "adjusted_rand_index", "degrees_of_freedom",
    "edge_recovery", "score", "select", "random_sparse_precision",
    "GlassoError", "PenaltySpec", "fit_path", "fit_penalized", "glasso",
    "GigParams", "gig_moments", "gig_sample", "log_bessel_k",
]
