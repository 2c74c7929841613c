"""Reproducible generators for synthetic count mixtures.

Three generators are provided: the MPLN hierarchy itself, mixtures of
independent negative binomials, and mixtures of independent Poissons. The
four built-in presets (sim1..sim4) freeze the parameterizations used in the
package's benchmark studies.

Streams are keyed by (seed, dataset index) through numpy's SeedSequence, so
replicate r of a run is reproducible in isolation and independent of how many
other replicates were generated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidParameterError
from .model import Component, CountMatrix, MixtureParams


@dataclass(frozen=True)
class SimulationPreset:
    name: str
    kind: str  # "mpln" | "nb" | "poisson"
    n: int
    d: int
    pi: tuple
    mus: tuple = ()  # mpln: latent means
    sigmas: tuple = ()  # mpln: latent covariances
    means: tuple = ()  # nb/poisson: count means
    variances: tuple = ()  # nb: count variances


_SIGMA_12 = (
    (0.30, 0.15, 0.20),
    (0.15, 0.40, 0.30),
    (0.20, 0.30, 0.40),
)
_SIGMA_3 = (
    (0.20, -0.15, -0.10),
    (-0.15, 0.40, -0.10),
    (-0.10, -0.10, 0.20),
)

PRESETS = {
    "sim1": SimulationPreset(
        name="sim1", kind="mpln", n=2000, d=3, pi=(0.2, 0.5, 0.3),
        mus=((6, 3, 3), (3, 5, 3), (5, 3, 5)),
        sigmas=(_SIGMA_12, _SIGMA_12, _SIGMA_3),
    ),
    "sim2": SimulationPreset(
        name="sim2", kind="mpln", n=500, d=6, pi=(0.59, 0.41),
        mus=((5, 6, 5, 5, 5, 6), (2.5, 3, 2.5, 3, 3, 2.5)),
        sigmas=(tuple(map(tuple, np.eye(6))), tuple(map(tuple, np.eye(6)))),
    ),
    "sim3": SimulationPreset(
        name="sim3", kind="nb", n=2000, d=6, pi=(0.79, 0.21),
        means=((1000, 500, 1000, 500, 1000, 500), (500, 1000, 500, 1000, 500, 500)),
        variances=((11000, 3000, 11000, 3000, 11000, 3000),
                   (3000, 11000, 3000, 11000, 3000, 3000)),
    ),
    "sim4": SimulationPreset(
        name="sim4", kind="poisson", n=1000, d=4, pi=(0.59, 0.41),
        means=((1000, 1500, 1500, 1000), (1000, 1000, 1000, 1500)),
    ),
}


def preset_params(name: str) -> SimulationPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise InvalidParameterError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def dataset_rng(seed: int, dataset_index: int = 0) -> np.random.Generator:
    """Independent, reproducible stream for one dataset of a run."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(dataset_index,)))


def _draw_labels(pi, n, rng):
    pi = np.asarray(pi, dtype=float)
    if np.any(pi <= 0) or abs(pi.sum() - 1.0) > 1e-8:
        raise InvalidParameterError("mixing proportions must be positive and sum to 1")
    return rng.choice(len(pi), size=n, p=pi)


def gen_mpln_mixture(params: MixtureParams, n: int, rng) -> tuple[CountMatrix, np.ndarray]:
    """Sample the MPLN hierarchy: z ~ Cat(pi), theta ~ N(mu_z, sigma_z), y ~ Poisson(e^theta)."""
    labels = _draw_labels(params.weights, n, rng)
    d = params.d
    theta = np.empty((n, d))
    for g, comp in enumerate(params.components):
        idx = np.flatnonzero(labels == g)
        if idx.size:
            chol = np.linalg.cholesky(comp.sigma)
            theta[idx] = comp.mu + rng.standard_normal((idx.size, d)) @ chol.T
    counts = rng.poisson(np.exp(theta))
    return CountMatrix(counts), labels


def nb_size(mean, variance):
    """Negative binomial size parameter r = mean^2 / (variance - mean)."""
    mean = np.asarray(mean, dtype=float)
    variance = np.asarray(variance, dtype=float)
    if np.any(variance <= mean):
        raise InvalidParameterError("negative binomial requires variance > mean")
    return mean**2 / (variance - mean)


def gen_nb_mixture(means, variances, pi, n, rng) -> tuple[CountMatrix, np.ndarray]:
    """Mixture of coordinate-wise independent negative binomials."""
    means = np.asarray(means, dtype=float)
    variances = np.asarray(variances, dtype=float)
    labels = _draw_labels(pi, n, rng)
    sizes = nb_size(means, variances)
    probs = sizes / (sizes + means)
    counts = np.empty((n, means.shape[1]), dtype=np.int64)
    for g in range(means.shape[0]):
        idx = np.flatnonzero(labels == g)
        if idx.size:
            counts[idx] = rng.negative_binomial(sizes[g], probs[g], size=(idx.size, means.shape[1]))
    return CountMatrix(counts), labels


def gen_poisson_mixture(means, pi, n, rng) -> tuple[CountMatrix, np.ndarray]:
    """Mixture of coordinate-wise independent Poissons."""
    means = np.asarray(means, dtype=float)
    if np.any(means <= 0):
        raise InvalidParameterError("Poisson means must be positive")
    labels = _draw_labels(pi, n, rng)
    counts = np.empty((n, means.shape[1]), dtype=np.int64)
    for g in range(means.shape[0]):
        idx = np.flatnonzero(labels == g)
        if idx.size:
            counts[idx] = rng.poisson(means[g], size=(idx.size, means.shape[1]))
    return CountMatrix(counts), labels


def preset_mixture_params(preset: SimulationPreset) -> MixtureParams | None:
    """Latent-mixture view of an MPLN preset (None for nb/poisson presets)."""
    if preset.kind != "mpln":
        return None
    comps = tuple(Component(np.array(mu, float), np.array(sig, float))
                  for mu, sig in zip(preset.mus, preset.sigmas))
    model = "EII" if preset.name == "sim2" else "VVV"
    return MixtureParams(np.array(preset.pi), comps, model)


def generate_preset(name: str, seed: int, dataset_index: int = 0,
                    n: int | None = None) -> tuple[CountMatrix, np.ndarray]:
    """Generate one dataset from a named preset."""
    preset = preset_params(name)
    rng = dataset_rng(seed, dataset_index)
    n = preset.n if n is None else n
    if preset.kind == "mpln":
        return gen_mpln_mixture(preset_mixture_params(preset), n, rng)
    if preset.kind == "nb":
        return gen_nb_mixture(preset.means, preset.variances, preset.pi, n, rng)
    return gen_poisson_mixture(preset.means, preset.pi, n, rng)
