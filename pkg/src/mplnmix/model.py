"""Core MPLN types, moment formulas, and elementary log-density terms.

The multivariate Poisson-lognormal (MPLN) model is hierarchical: counts are
conditionally independent Poissons whose log-rates follow a multivariate
Gaussian. Everything else in the package builds on the small set of types and
closed-form quantities defined here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .exceptions import InvalidInputError, InvalidParameterError

COVARIANCE_MODELS = ("EII", "VII", "EEI", "VVI", "EEE", "VVE", "EEV", "VVV")

# Models whose latent covariances are diagonal (independent latent coordinates).
DIAGONAL_MODELS = frozenset({"EII", "VII", "EEI", "VVI"})

_SPD_REL_TOL = 1e-10


def validate_covariance_model(label: str) -> str:
    if label not in COVARIANCE_MODELS:
        raise InvalidParameterError(
            f"unknown covariance model {label!r}; expected one of {COVARIANCE_MODELS}"
        )
    return label


def check_spd(sigma: np.ndarray, name: str = "sigma") -> np.ndarray:
    """Validate that ``sigma`` is symmetric positive definite.

    Uses a Cholesky factorization with a scale-relative pivot threshold
    (smallest pivot > 1e-10 x largest diagonal entry) so that well-conditioned
    matrices at any overall scale pass.
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise InvalidParameterError(f"{name} must be square, got shape {sigma.shape}")
    scale = np.max(np.abs(sigma)) if sigma.size else 0.0
    if not np.allclose(sigma, sigma.T, atol=1e-8 * max(scale, 1.0)):
        raise InvalidParameterError(f"{name} is not symmetric")
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise InvalidParameterError(f"{name} is not positive definite") from None
    pivots = np.diag(chol) ** 2
    if pivots.min() <= _SPD_REL_TOL * np.max(np.diag(sigma)):
        raise InvalidParameterError(f"{name} is numerically singular")
    return sigma


@dataclass(frozen=True)
class CountMatrix:
    """An n x d matrix of non-negative integer observations."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidInputError(f"counts must be a 2-d matrix, got shape {arr.shape}")
        if not np.issubdtype(arr.dtype, np.integer):
            if not np.all(np.isfinite(arr)) or np.any(arr != np.floor(arr)):
                raise InvalidInputError("counts must be integral")
            arr = arr.astype(np.int64)
        if np.any(arr < 0):
            raise InvalidInputError("counts must be non-negative")
        object.__setattr__(self, "values", arr)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class Component:
    """One mixture component: latent Gaussian mean and covariance."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).ravel()
        sigma = check_spd(np.asarray(self.sigma, dtype=float))
        if sigma.shape[0] != mu.shape[0]:
            raise InvalidParameterError(
                f"mu has dimension {mu.shape[0]} but sigma is {sigma.shape[0]}x{sigma.shape[1]}"
            )
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def d(self) -> int:
        return self.mu.shape[0]


@dataclass(frozen=True)
class MixtureParams:
    """Mixing weights plus per-component latent Gaussian parameters."""

    weights: np.ndarray
    components: tuple
    model: str = "VVV"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        comps = tuple(self.components)
        if len(comps) != w.shape[0]:
            raise InvalidParameterError("weights and components disagree on G")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-8:
            raise InvalidParameterError("weights must be positive and sum to 1")
        dims = {c.d for c in comps}
        if len(dims) != 1:
            raise InvalidParameterError("components must share one dimension")
        validate_covariance_model(self.model)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "components", comps)

    @property
    def G(self) -> int:
        return len(self.components)

    @property
    def d(self) -> int:
        return self.components[0].d

    @property
    def mus(self) -> np.ndarray:
        return np.stack([c.mu for c in self.components])

    @property
    def sigmas(self) -> np.ndarray:
        return np.stack([c.sigma for c in self.components])


def mpln_moments(mu: np.ndarray, sigma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Marginal mean and covariance of the counts for one MPLN component.

    mean_j = exp(mu_j + sigma_jj / 2)
    cov_jj = mean_j + mean_j^2 (exp(sigma_jj) - 1)
    cov_jk = mean_j mean_k (exp(sigma_jk) - 1) for j != k
    """
    mu = np.asarray(mu, dtype=float).ravel()
    sigma = check_spd(sigma)
    mean = np.exp(mu + 0.5 * np.diag(sigma))
    cov = np.outer(mean, mean) * np.expm1(sigma)
    cov[np.diag_indices_from(cov)] += mean
    return mean, cov


def log_poisson_term(y, theta):
    """log p(y | rate e^theta) = y*theta - exp(theta) - log(y!).

    Vectorizes over matching-shape arrays. log-gamma is used instead of a
    factorial so large counts do not overflow.
    """
    y_arr = np.asarray(y)
    if np.any(y_arr < 0):
        raise InvalidInputError("counts must be non-negative")
    theta = np.asarray(theta, dtype=float)
    out = y_arr * theta - np.exp(theta) - gammaln(y_arr + 1.0)
    return out if out.ndim else float(out)


def count_free_params(model: str, d: int, G: int) -> tuple[int, int]:
    """Free-parameter counts (covariance only, and total) for a fitted mixture.

    The total adds G-1 mixing weights and G*d means to the covariance count;
    variational parameters are never counted.
    """
    validate_covariance_model(model)
    if d < 1 or G < 1:
        raise InvalidInputError("d and G must be >= 1")
    full = d * (d + 1) // 2
    cov_params = {
        "EII": 1,
        "VII": G,
        "EEI": d,
        "VVI": d * G,
        "EEE": full,
        "VVE": full + (G - 1) * d,
        "EEV": G * full - (G - 1) * d,
        "VVV": G * full,
    }[model]
    total = cov_params + (G - 1) + G * d
    return cov_params, total
