import hashlib
import json

import numpy as np
import pytest
from scipy import stats

from mplnmix.datagen import (
    PRESETS,
    dataset_rng,
    gen_mpln_mixture,
    gen_nb_mixture,
    gen_poisson_mixture,
    generate_preset,
    nb_size,
    preset_mixture_params,
    preset_params,
)
from mplnmix.exceptions import InvalidParameterError
from mplnmix.model import Component, MixtureParams, mpln_moments

# Guard against accidental drift of the preset constants.
_PRESET_DIGEST = "ee333c655770d74e705bfa747e7ce1a2004a579f60e9122e1261ebadeac5b62c"


def test_preset_checksum():
    blob = json.dumps(
        {name: vars(p) for name, p in sorted(PRESETS.items())},
        sort_keys=True, default=str,
    ).encode()
    assert hashlib.sha256(blob).hexdigest() == _PRESET_DIGEST


def test_preset_values():
    p1 = preset_params("sim1")
    assert (p1.n, p1.d) == (2000, 3)
    assert p1.pi == (0.2, 0.5, 0.3)
    assert p1.mus == ((6, 3, 3), (3, 5, 3), (5, 3, 5))
    assert p1.sigmas[0] == p1.sigmas[1]
    assert np.allclose(p1.sigmas[2], [[0.2, -0.15, -0.1], [-0.15, 0.4, -0.1], [-0.1, -0.1, 0.2]])

    p2 = preset_params("sim2")
    assert (p2.n, p2.d, p2.pi) == (500, 6, (0.59, 0.41))
    assert p2.mus == ((5, 6, 5, 5, 5, 6), (2.5, 3, 2.5, 3, 3, 2.5))
    assert np.allclose(p2.sigmas[0], np.eye(6))

    p3 = preset_params("sim3")
    assert (p3.n, p3.d, p3.pi) == (2000, 6, (0.79, 0.21))
    assert p3.means == ((1000, 500, 1000, 500, 1000, 500), (500, 1000, 500, 1000, 500, 500))
    assert p3.variances[0] == (11000, 3000, 11000, 3000, 11000, 3000)

    p4 = preset_params("sim4")
    assert (p4.n, p4.d, p4.pi) == (1000, 4, (0.59, 0.41))
    assert p4.means == ((1000, 1500, 1500, 1000), (1000, 1000, 1000, 1500))


def test_unknown_preset():
    with pytest.raises(InvalidParameterError):
        preset_params("sim9")


def test_seed_determinism_and_stream_independence():
    a1, z1 = generate_preset("sim2", seed=4, dataset_index=0)
    a2, z2 = generate_preset("sim2", seed=4, dataset_index=0)
    assert np.array_equal(a1.values, a2.values) and np.array_equal(z1, z2)
    b, _ = generate_preset("sim2", seed=4, dataset_index=1)
    assert not np.array_equal(a1.values, b.values)
    c, _ = generate_preset("sim2", seed=5, dataset_index=0)
    assert not np.array_equal(a1.values, c.values)


def test_label_proportions_chi2():
    _, z = generate_preset("sim1", seed=0, n=100_000)
    counts = np.bincount(z, minlength=3)
    res = stats.chisquare(counts, f_exp=np.array([0.2, 0.5, 0.3]) * 100_000)
    assert res.pvalue > 0.01


class TestMplnGenerator:
    def test_component_moments_match_formula(self):
        comp = Component([1.0, 2.0], [[0.3, 0.15], [0.15, 0.4]])
        params = MixtureParams([1.0], (comp,), "VVV")
        Y, _ = gen_mpln_mixture(params, 100_000, np.random.default_rng(12))
        mean, cov = mpln_moments(comp.mu, comp.sigma)
        v = Y.values
        se_mean = v.std(axis=0) / np.sqrt(v.shape[0])
        assert np.all(np.abs(v.mean(axis=0) - mean) < 3 * se_mean)
        # 3 s.e. of the sample variance via the central fourth moment.
        for j in range(2):
            m4 = stats.moment(v[:, j], moment=4)
            var_j = v[:, j].var()
            se_var = np.sqrt((m4 - var_j**2) / v.shape[0])
            assert abs(var_j - cov[j, j]) < 3 * se_var
        emp_cov = np.cov(v.T)[0, 1]
        assert abs(emp_cov - cov[0, 1]) / cov[0, 1] < 0.1

    def test_diagonal_sigma_gives_uncorrelated_counts(self):
        comp = Component([1.0, 1.5], np.diag([0.4, 0.3]))
        params = MixtureParams([1.0], (comp,), "VVI")
        Y, _ = gen_mpln_mixture(params, 100_000, np.random.default_rng(8))
        r = np.corrcoef(Y.values.T)[0, 1]
        assert abs(r) < 0.05


class TestNbGenerator:
    def test_size_from_mean_variance(self):
        assert nb_size(1000.0, 11000.0) == pytest.approx(100.0)
        assert nb_size(500.0, 3000.0) == pytest.approx(100.0)

    def test_variance_must_exceed_mean(self):
        with pytest.raises(InvalidParameterError):
            gen_nb_mixture([[10.0]], [[10.0]], [1.0], 5, np.random.default_rng(0))

    def test_moments(self):
        means = [[1000.0, 500.0]]
        variances = [[11000.0, 3000.0]]
        Y, _ = gen_nb_mixture(means, variances, [1.0], 100_000, np.random.default_rng(3))
        v = Y.values
        se_mean = v.std(axis=0) / np.sqrt(v.shape[0])
        assert np.all(np.abs(v.mean(axis=0) - means[0]) < 3 * se_mean)
        for j in range(2):
            m4 = stats.moment(v[:, j], moment=4)
            var_j = v[:, j].var()
            se_var = np.sqrt((m4 - var_j**2) / v.shape[0])
            assert abs(var_j - variances[0][j]) < 3 * se_var


class TestPoissonGenerator:
    def test_equidispersion(self):
        Y, _ = gen_poisson_mixture([[1000.0, 1500.0]], [1.0], 100_000,
                                   np.random.default_rng(6))
        v = Y.values
        ratio = v.var(axis=0) / v.mean(axis=0)
        assert np.all((ratio > 0.97) & (ratio < 1.03))

    def test_nonpositive_mean_rejected(self):
        with pytest.raises(InvalidParameterError):
            gen_poisson_mixture([[0.0]], [1.0], 5, np.random.default_rng(0))


def test_bad_pi_rejected():
    with pytest.raises(InvalidParameterError):
        gen_poisson_mixture([[1.0], [2.0]], [0.5, 0.6], 5, np.random.default_rng(0))


def test_preset_mixture_params_roundtrip():
    params = preset_mixture_params(preset_params("sim1"))
    assert params.G == 3 and params.d == 3 and params.model == "VVV"
    assert preset_mixture_params(preset_params("sim3")) is None


def test_dataset_rng_repeatable():
    r1 = dataset_rng(9, 2).integers(0, 1000, 10)
    r2 = dataset_rng(9, 2).integers(0, 1000, 10)
    assert np.array_equal(r1, r2)
