import math

import mpmath as mp
import numpy as np
import pytest

from geomc.covariance import CovFamily, ProcessParams, cov_matrix
from geomc.fullrank import FullRankFit, ThetaChain
from geomc.linalg import chol, trsolve
from geomc.model import (
    BetaPrior,
    SamplerOptions,
    ScalarPrior,
    SpatialDataset,
    ThetaSpec,
)
from geomc.recover import beta_factors, draw_beta, henderson_draw, recover
from oracles import gauss_jordan_inverse, random_spd

EXP = CovFamily("exponential")


def make_spec():
    return ThetaSpec.for_family(
        EXP,
        priors={
            "sigma_sq": ScalarPrior.inverse_gamma(2.0, 1.0),
            "tau_sq": ScalarPrior.inverse_gamma(2.0, 1.0),
            "phi": ScalarPrior.uniform(3.0, 30.0),
        },
        starting={"sigma_sq": 1.0, "tau_sq": 1.0, "phi": 6.0},
        tuning={"sigma_sq": 0.1, "tau_sq": 0.1, "phi": 0.3},
    )


def constant_chain_fit(data, params, m=50, seed=4):
    """FullRankFit whose chain is a point mass at ``params``."""
    spec = make_spec()
    row = np.array([params.sigma_sq, params.tau_sq, params.phi])
    chain = ThetaChain(
        samples=np.tile(row, (m, 1)),
        log_targets=np.zeros(m),
        names=spec.names,
        accept_rate=1.0,
        n_proposals=m,
    )
    options = SamplerOptions(n_samples=m, seed=seed)
    return FullRankFit(data, EXP, spec, BetaPrior.flat(), options, chain)


class TestBetaDraw:
    def test_identity_posterior_mean(self, rng):
        # Sigma = I, X = I (n = p at this level), flat prior, z = 0 -> beta = y
        n = 4
        y = rng.normal(size=n)
        b, l_b = beta_factors(chol(np.eye(n)), y, np.eye(n), BetaPrior.flat())
        np.testing.assert_allclose(draw_beta(b, l_b, np.zeros(n)), y,
                                   atol=1e-12)

    def test_moments_match_dense_oracle(self, rng):
        n, p = 8, 2
        coords = rng.random((n, 2))
        x = np.column_stack([np.ones(n), rng.normal(size=n)])
        y = rng.normal(size=n)
        params = ProcessParams(sigma_sq=1.5, phi=5.0, tau_sq=0.8)
        mu_b = np.array([0.5, -1.0])
        sigma_b = np.array([[2.0, 0.3], [0.3, 1.0]])
        prior = BetaPrior.normal(mu_b, sigma_b)
        sigma = cov_matrix(coords, EXP, params, include_nugget=True)

        # analytic conditional via explicit inverses
        s_inv = gauss_jordan_inverse(sigma)
        prior_prec = gauss_jordan_inverse(sigma_b)
        b_cov = gauss_jordan_inverse(prior_prec + x.T @ s_inv @ x)
        b_mean = b_cov @ (prior_prec @ mu_b + x.T @ s_inv @ y)

        b, l_b = beta_factors(chol(sigma), y, x, prior)
        m = 100_000
        draws = np.empty((m, p))
        local = np.random.default_rng(2)
        for k in range(m):
            draws[k] = draw_beta(b, l_b, local.standard_normal(p))
        se_mean = np.sqrt(np.diag(b_cov) / m)
        assert np.all(np.abs(draws.mean(axis=0) - b_mean) < 4 * se_mean)
        emp_cov = np.cov(draws.T)
        assert np.max(np.abs(emp_cov - b_cov)) < 4 * np.max(np.abs(b_cov)) / math.sqrt(m / 3)


class TestHendersonIdentity:
    def equivalence_case(self, k_mat, g_mat):
        # package path: B = G - W'W from chol(K + G)
        l = chol(k_mat + g_mat, check_symmetry=False)
        w = trsolve(l, g_mat)
        b_pkg = g_mat - w.T @ w
        # extended-precision oracle: (K^{-1} + G^{-1})^{-1}
        with mp.workdps(60):
            k_mp = mp.matrix(k_mat.tolist())
            g_mp = mp.matrix(g_mat.tolist())
            b_mp = (k_mp**-1 + g_mp**-1) ** -1
            b_oracle = np.array(b_mp.tolist(), dtype=np.float64)
        return b_pkg, b_oracle

    def test_random_instances(self, rng):
        for _ in range(25):
            n = int(rng.integers(2, 11))
            b_pkg, b_oracle = self.equivalence_case(
                random_spd(rng, n), random_spd(rng, n)
            )
            scale = np.max(np.abs(b_oracle))
            assert np.max(np.abs(b_pkg - b_oracle)) < 1e-8 * scale

    def test_near_singular_gaussian_kernel(self, rng):
        # gaussian correlation with tiny phi is numerically rank deficient:
        # the identity route must still match the high-precision oracle
        coords = rng.random((8, 2))
        params = ProcessParams(sigma_sq=2.0, phi=1e-4, tau_sq=0.5)
        k_mat = cov_matrix(coords, CovFamily("gaussian"), params)
        assert np.linalg.cond(k_mat) > 1e12  # genuinely near singular
        g_mat = np.diag(np.full(8, 0.7))
        b_pkg, b_oracle = self.equivalence_case(k_mat, g_mat)
        scale = np.max(np.abs(b_oracle))
        assert np.max(np.abs(b_pkg - b_oracle)) < 1e-8 * scale

    def test_hand_conjugate_instance(self):
        # K = I, G = D = I, b = y: posterior N(y/2, I/2)
        y = np.array([0.8, -0.4])
        local = np.random.default_rng(3)
        draws = np.empty((50_000, 2))
        for k in range(draws.shape[0]):
            draws[k] = henderson_draw(np.eye(2), np.eye(2), y,
                                      local.standard_normal(2))
        se = math.sqrt(0.5 / draws.shape[0])
        assert np.all(np.abs(draws.mean(axis=0) - y / 2.0) < 4 * se)
        emp = np.cov(draws.T)
        assert np.max(np.abs(emp - 0.5 * np.eye(2))) < 0.02

    def test_flat_noise_limit_pulls_mean_to_zero(self, rng):
        # huge noise variance: no information, the effect mean collapses to 0
        n = 5
        coords = rng.random((n, 2))
        params = ProcessParams(sigma_sq=2.0, phi=6.0, tau_sq=0.0)
        k_mat = cov_matrix(coords, EXP, params)
        g_mat = np.diag(np.full(n, 1e12))
        y = rng.normal(size=n)
        b = y / 1e12
        mean = henderson_draw(k_mat, g_mat, b, np.zeros(n))
        assert np.max(np.abs(mean)) < 1e-5


class TestRecover:
    def make_data(self, rng, n=30):
        coords = rng.random((n, 2))
        x = np.column_stack([np.ones(n), rng.normal(size=n)])
        y = rng.normal(size=n) + x @ np.array([1.0, 2.0])
        return SpatialDataset(coords, y, x)

    def test_retention_counts(self, rng):
        data = self.make_data(rng)
        params = ProcessParams(sigma_sq=1.0, phi=6.0, tau_sq=0.5)
        fit = constant_chain_fit(data, params, m=5000)
        rec = recover(fit, start=3750, thin=5)
        assert rec.n_retained == 251
        assert rec.beta.shape == (251, 2)
        assert rec.w.shape == (251, data.n)

    def test_index_keyed_draws(self, rng):
        # shared retained indices get identical draws regardless of the
        # retention pattern (permutation/alignment invariance)
        data = self.make_data(rng)
        params = ProcessParams(sigma_sq=1.0, phi=6.0, tau_sq=0.5)
        fit = constant_chain_fit(data, params, m=40)
        rec_a = recover(fit, start=10, thin=2)
        rec_b = recover(fit, start=10, thin=6)
        common_a = [np.flatnonzero(rec_a.indices == i)[0] for i in rec_b.indices]
        np.testing.assert_array_equal(rec_a.beta[common_a], rec_b.beta)
        np.testing.assert_array_equal(rec_a.w[common_a], rec_b.w)

    def test_point_mass_w_moments_informative(self, rng):
        # with theta fixed, recovered w moments match the analytic
        # conditional (mu_beta conditioning, Z = I)
        n = 12
        coords = rng.random((n, 2))
        x = np.column_stack([np.ones(n), rng.normal(size=n)])
        y = rng.normal(size=n)
        data = SpatialDataset(coords, y, x)
        params = ProcessParams(sigma_sq=1.3, phi=7.0, tau_sq=0.6)
        mu_b = np.zeros(2)
        sigma_b = 0.5 * np.eye(2)
        prior = BetaPrior.normal(mu_b, sigma_b)

        m = 4000
        spec = make_spec()
        row = np.array([params.sigma_sq, params.tau_sq, params.phi])
        chain = ThetaChain(np.tile(row, (m, 1)), np.zeros(m), spec.names, 1.0, m)
        fit = FullRankFit(data, EXP, spec, prior, SamplerOptions(n_samples=m, seed=8), chain)
        rec = recover(fit, start=1, thin=1)

        k_mat = cov_matrix(coords, EXP, params)
        g_mat = (x @ sigma_b) @ x.T + params.tau_sq * np.eye(n)
        b_cov = gauss_jordan_inverse(
            gauss_jordan_inverse(k_mat) + gauss_jordan_inverse(g_mat)
        )
        b_mean = b_cov @ gauss_jordan_inverse(g_mat) @ (y - x @ mu_b)
        se = np.sqrt(np.diag(b_cov) / m)
        assert np.all(np.abs(rec.w.mean(axis=0) - b_mean) < 4 * se + 1e-9)

    def test_flat_prior_uses_beta_conditioning(self, rng):
        data = self.make_data(rng)
        params = ProcessParams(sigma_sq=1.0, phi=6.0, tau_sq=0.5)
        fit = constant_chain_fit(data, params, m=20)
        with pytest.raises(ValueError):
            recover(fit, start=1, thin=1, conditioning="mu_beta")
        rec = recover(fit, start=1, thin=1)  # auto -> beta conditioning
        assert np.isfinite(rec.w).all()
