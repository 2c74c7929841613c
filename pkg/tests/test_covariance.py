import numpy as np
import pytest

from mplnmix.covariance import (
    GroupScatter,
    decompose,
    gaussian_criterion,
    mstep_cov,
    sample_cov,
    vve_mm_trace,
)
from mplnmix.exceptions import DegenerateScatterError, InvalidParameterError
from mplnmix.model import COVARIANCE_MODELS, count_free_params


def random_scatters(rng, d, G, spread=1.0):
    out = []
    for _ in range(G):
        a = rng.standard_normal((d, d))
        cov = spread * (a @ a.T) + 0.3 * np.eye(d)
        out.append(GroupScatter(float(rng.uniform(5, 50)), cov))
    return out


class TestSampleCov:
    def test_single_site_identity(self):
        sc = sample_cov([1.0], np.zeros((1, 2)), np.eye(2)[None], np.zeros(2))
        assert np.allclose(sc.sample_cov, np.eye(2))
        assert sc.n_g == 1.0

    def test_two_sites_d1(self):
        m = np.array([[1.0], [-1.0]])
        S = np.full((2, 1, 1), 0.5)
        sc = sample_cov([1.0, 1.0], m, S, np.zeros(1))
        assert sc.sample_cov[0, 0] == pytest.approx(1.5)

    def test_output_psd(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            n, d = 8, 3
            z = rng.uniform(0.01, 1.0, size=n)
            m = rng.standard_normal((n, d))
            S = np.stack([np.eye(d) * rng.uniform(0.1, 1.0) for _ in range(n)])
            sc = sample_cov(z, m, S, rng.standard_normal(d))
            assert np.allclose(sc.sample_cov, sc.sample_cov.T)
            assert np.linalg.eigvalsh(sc.sample_cov).min() >= -1e-12

    def test_zero_mass(self):
        with pytest.raises(DegenerateScatterError):
            sample_cov([0.0], np.zeros((1, 1)), np.eye(1)[None], np.zeros(1))


class TestDecompose:
    def test_spherical(self):
        dec = decompose(2.0 * np.eye(3))
        assert dec.lam == pytest.approx(2.0)
        assert np.allclose(dec.A, np.eye(3))
        assert np.allclose(dec.reconstruct(), 2.0 * np.eye(3), atol=1e-10)

    def test_diag_example(self):
        dec = decompose(np.diag([4.0, 1.0]))
        assert dec.lam == pytest.approx(2.0)
        assert np.allclose(np.diag(dec.A), [2.0, 0.5])

    def test_reconstruction_and_unit_det(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            d = int(rng.integers(2, 6))
            a = rng.standard_normal((d, d))
            sigma = a @ a.T + 0.2 * np.eye(d)
            dec = decompose(sigma)
            assert abs(np.linalg.det(dec.A) - 1.0) < 1e-10
            assert np.max(np.abs(dec.D.T @ dec.D - np.eye(d))) < 1e-10
            assert np.allclose(dec.reconstruct(), sigma, atol=1e-10)

    def test_non_spd(self):
        with pytest.raises(InvalidParameterError):
            decompose(np.array([[1.0, 2.0], [2.0, 1.0]]))


def _structure_ok(model, sigmas, d):
    tol = 1e-10
    if model in ("EII", "VII"):
        for s in sigmas:
            assert np.allclose(s, s[0, 0] * np.eye(d), atol=tol)
    if model in ("EEI", "VVI"):
        for s in sigmas:
            assert np.allclose(s, np.diag(np.diag(s)), atol=tol)
    if model in ("EII", "EEI", "EEE"):
        for s in sigmas[1:]:
            assert np.allclose(s, sigmas[0], atol=tol)
    if model == "VVE":
        # All groups share one orientation: they commute pairwise.
        for s in sigmas[1:]:
            assert np.max(np.abs(s @ sigmas[0] - sigmas[0] @ s)) < 1e-8
    if model == "EEV":
        ref = np.sort(np.linalg.eigvalsh(sigmas[0]))
        for s in sigmas[1:]:
            assert np.allclose(np.sort(np.linalg.eigvalsh(s)), ref, atol=1e-8)


class TestMstepCov:
    def test_eii_single_group(self):
        sc = GroupScatter(3.0, np.array([[2.0, 1.0], [1.0, 4.0]]))
        sigmas = mstep_cov("EII", [sc])
        assert np.allclose(sigmas[0], 3.0 * np.eye(2))

    @pytest.mark.parametrize("model", COVARIANCE_MODELS)
    def test_constraint_satisfying_scatters_unchanged(self, model):
        rng = np.random.default_rng(8)
        d, G = 3, 2
        base = random_scatters(rng, d, G)
        sigmas0 = mstep_cov(model, base)
        fixed = [GroupScatter(sc.n_g, sig) for sc, sig in zip(base, sigmas0)]
        sigmas1 = mstep_cov(model, fixed)
        for s0, s1 in zip(sigmas0, sigmas1):
            assert np.allclose(s0, s1, atol=1e-8), model

    @pytest.mark.parametrize("model", COVARIANCE_MODELS)
    def test_structure_and_dominance(self, model):
        rng = np.random.default_rng(13)
        for _ in range(25):
            d, G = int(rng.choice([2, 4])), int(rng.choice([2, 3]))
            scatters = random_scatters(rng, d, G)
            sigmas = mstep_cov(model, scatters)
            for s in sigmas:
                assert np.linalg.eigvalsh(s).min() > 0
            _structure_ok(model, sigmas, d)
            crit = gaussian_criterion(sigmas, scatters)
            crit_vvv = gaussian_criterion(mstep_cov("VVV", scatters), scatters)
            assert crit >= crit_vvv - 1e-8

    def test_nesting(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            d, G = 3, 2
            scatters = random_scatters(rng, d, G)
            crit = {
                m: gaussian_criterion(mstep_cov(m, scatters), scatters)
                for m in ("EII", "VII", "EEI", "VVI", "VVV")
            }
            assert crit["EII"] >= crit["VII"] - 1e-8
            assert crit["VII"] >= crit["VVI"] - 1e-8
            assert crit["EEI"] >= crit["VVI"] - 1e-8
            assert crit["VVI"] >= crit["VVV"] - 1e-8

    def test_vve_monotone_descent(self):
        rng = np.random.default_rng(34)
        for _ in range(10):
            scatters = random_scatters(rng, 4, 3)
            trace = vve_mm_trace(scatters)
            diffs = np.diff(trace)
            assert np.all(diffs <= 1e-10)

    def test_vve_parameter_count_consistency(self):
        # VVE exposes d(d+1)/2 + (G-1)d free numbers: one shared orthogonal
        # orientation plus per-group eigenvalues.
        rng = np.random.default_rng(55)
        d, G = 3, 2
        sigmas = mstep_cov("VVE", random_scatters(rng, d, G))
        cov_params, _ = count_free_params("VVE", d, G)
        assert cov_params == d * (d + 1) // 2 + (G - 1) * d
        # Shared orientation means simultaneous diagonalization.
        _structure_ok("VVE", sigmas, d)

    def test_degenerate_scatter_jittered(self):
        # Rank-deficient scatter still yields an SPD estimate via jitter.
        sc = GroupScatter(5.0, np.outer([1.0, 1.0], [1.0, 1.0]))
        sigmas = mstep_cov("VVV", [sc])
        assert np.linalg.eigvalsh(sigmas[0]).min() > 0

    def test_zero_group_rejected(self):
        sc = GroupScatter(0.0, np.eye(2))
        with pytest.raises(DegenerateScatterError):
            mstep_cov("VVV", [sc])
