"""Clustering of multivariate count data with MPLN mixtures.

Finite mixtures of multivariate Poisson-lognormal distributions fitted by
variational Gaussian EM, with a parsimonious eigen-decomposed covariance
family, BIC model selection, simulation generators, and evaluation metrics.
"""

from .model import (
    COVARIANCE_MODELS,
    Component,
    CountMatrix,
    MixtureParams,
    count_free_params,
    log_poisson_term,
    mpln_moments,
)
from .variational import (
    VariationalSite,
    VariationalState,
    elbo_obs,
    inner_optimize,
    responsibilities,
    update_S,
    update_m,
)
from .covariance import EigenDecomposition, GroupScatter, decompose, mstep_cov, sample_cov
from .engine import FitConfig, FitResult, aitken_stop, bic, fit, grid_search, small_em_init
from .datagen import (
    PRESETS,
    gen_mpln_mixture,
    gen_nb_mixture,
    gen_poisson_mixture,
    generate_preset,
)
from .evaluation import ari, confusion, recovery_summary

__version__ = "0.1.0"

__all__ = [
    "COVARIANCE_MODELS",
    "Component",
    "CountMatrix",
    "EigenDecomposition",
    "FitConfig",
    "FitResult",
    "GroupScatter",
    "MixtureParams",
    "PRESETS",
    "VariationalSite",
    "VariationalState",
    "aitken_stop",
    "ari",
    "bic",
    "confusion",
    "count_free_params",
    "decompose",
    "elbo_obs",
    "fit",
    "gen_mpln_mixture",
    "gen_nb_mixture",
    "gen_poisson_mixture",
    "generate_preset",
    "grid_search",
    "inner_optimize",
    "log_poisson_term",
    "mpln_moments",
    "mstep_cov",
    "recovery_summary",
    "responsibilities",
    "sample_cov",
    "small_em_init",
    "update_S",
    "update_m",
]
