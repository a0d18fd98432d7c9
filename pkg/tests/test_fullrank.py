import math

import numpy as np
import pytest

from geomc.covariance import CovFamily, ProcessParams, cov_matrix
from geomc.fullrank import (
    MarginalWorkspace,
    fit_full_rank,
    flat_profile_terms,
    log_target_flat,
    log_target_informative,
)
from geomc.linalg import chol
from geomc.model import (
    BetaPrior,
    SamplerOptions,
    ScalarPrior,
    SpatialDataset,
    ThetaSpec,
)
from geomc.sampling import joint_rw_step
from oracles import gauss_jordan_solve, ig_logpdf, mvn_logpdf_noconst

EXP = CovFamily("exponential")


def make_spec(phi_hi=30.0):
    return ThetaSpec.for_family(
        EXP,
        priors={
            "sigma_sq": ScalarPrior.inverse_gamma(2.0, 1.0),
            "tau_sq": ScalarPrior.inverse_gamma(2.0, 1.0),
            "phi": ScalarPrior.uniform(3.0, phi_hi),
        },
        starting={"sigma_sq": 1.0, "tau_sq": 1.0, "phi": 6.0},
        tuning={"sigma_sq": 0.1, "tau_sq": 0.1, "phi": 0.3},
    )


def make_dataset(rng, n, p=2):
    coords = rng.random((n, 2))
    x = np.column_stack([np.ones(n)] + [rng.normal(size=n) for _ in range(p - 1)])
    y = rng.normal(size=n)
    return SpatialDataset(coords, y, x)


def random_params(rng):
    return ProcessParams(
        sigma_sq=float(rng.uniform(0.2, 4.0)),
        phi=float(rng.uniform(3.5, 25.0)),
        tau_sq=float(rng.uniform(0.1, 2.0)),
    )


def theta_log_prior(spec, params):
    return spec.log_prior_constrained([getattr(params, n) for n in spec.names])


class TestInformativeTarget:
    def test_single_observation_hand_value(self, rng):
        # n=1 scalar case evaluated through the inner workspace
        coords = np.array([[0.2, 0.7], [5.0, 5.0]])
        x = np.array([[1.0], [0.0]])
        y = np.array([0.0, 0.0])
        data = SpatialDataset(coords, y, x)
        prior = BetaPrior.normal(np.zeros(1), np.eye(1))
        ws = MarginalWorkspace(data, EXP, prior)
        params = ProcessParams(sigma_sq=1.0, phi=6.0, tau_sq=1.0)
        got = ws.loglik_informative(params)
        # far-apart points: Sigma ~ diag(3, 2) up to exp(-phi*d) ~ 1e-12
        want = -0.5 * (math.log(3.0) + math.log(2.0))
        assert got == pytest.approx(want, abs=1e-9)

    def test_zero_residual_gives_zero_quadratic(self, rng):
        data = make_dataset(rng, 7)
        mu = rng.normal(size=data.p)
        y = data.x @ mu
        data = SpatialDataset(data.coords, y, data.x)
        prior = BetaPrior.normal(mu, np.eye(data.p))
        ws = MarginalWorkspace(data, EXP, prior)
        params = random_params(rng)
        got = ws.loglik_informative(params)
        # residual y - X mu_beta is exactly zero, only the log-det remains
        sigma = (data.x @ prior.sigma_beta) @ data.x.T + cov_matrix(
            data.coords, EXP, params, include_nugget=True
        )
        _, logdet = np.linalg.slogdet(sigma)
        assert got == pytest.approx(-0.5 * logdet, rel=1e-10)

    def test_matches_dense_oracle(self, rng):
        spec = make_spec()
        for _ in range(20):
            data = make_dataset(rng, 6)
            mu = rng.normal(size=2)
            a = rng.normal(size=(2, 2))
            sigma_b = a @ a.T + np.eye(2)
            prior = BetaPrior.normal(mu, sigma_b)
            params = random_params(rng)
            got = log_target_informative(params, data, EXP, spec, prior)
            cov = (data.x @ sigma_b) @ data.x.T + cov_matrix(
                data.coords, EXP, params, include_nugget=True
            )
            want = mvn_logpdf_noconst(data.y, data.x @ mu, cov) + \
                theta_log_prior(spec, params)
            assert got == pytest.approx(want, rel=1e-8)


class TestFlatTarget:
    def test_two_observation_profile_formula(self, rng):
        # Sigma = I makes the profiled target a pure between-mean spread
        for _ in range(10):
            y = rng.normal(size=2)
            sum_log_w, quad = flat_profile_terms(
                chol(np.eye(2)), y, np.ones((2, 1))
            )
            ybar = y.mean()
            assert sum_log_w == pytest.approx(0.5 * math.log(2.0), rel=1e-12)
            assert quad == pytest.approx(np.sum((y - ybar) ** 2), abs=1e-12)

    def test_y_in_column_space(self, rng):
        data = make_dataset(rng, 8)
        coef = rng.normal(size=data.p)
        data = SpatialDataset(data.coords, data.x @ coef, data.x)
        ws = MarginalWorkspace(data, EXP, BetaPrior.flat())
        params = random_params(rng)
        sigma = cov_matrix(data.coords, EXP, params, include_nugget=True)
        _, quad = flat_profile_terms(chol(sigma), data.y, data.x)
        assert quad == pytest.approx(0.0, abs=1e-8)

    def test_matches_dense_oracle(self, rng):
        # Eq-style flat-prior marginal: -1/2 log|X'S^{-1}X| - 1/2 log|S|
        # - 1/2 (y'S^{-1}y - b'(X'S^{-1}X)^{-1}b) with b = X'S^{-1}y
        spec = make_spec()
        for _ in range(20):
            data = make_dataset(rng, 8)
            params = random_params(rng)
            got = log_target_flat(params, data, EXP, spec)
            s = cov_matrix(data.coords, EXP, params, include_nugget=True)
            s_inv_y = gauss_jordan_solve(s, data.y)
            s_inv_x = gauss_jordan_solve(s, data.x)
            xsx = data.x.T @ s_inv_x
            b = data.x.T @ s_inv_y
            _, logdet_s = np.linalg.slogdet(s)
            _, logdet_xsx = np.linalg.slogdet(xsx)
            quad = data.y @ s_inv_y - b @ gauss_jordan_solve(xsx, b)
            want = (
                theta_log_prior(spec, params)
                - 0.5 * logdet_xsx
                - 0.5 * logdet_s
                - 0.5 * quad
            )
            assert got == pytest.approx(want, rel=1e-8)


class TestFitFullRank:
    def test_chain_determinism(self, rng):
        data = make_dataset(rng, 15)
        spec = make_spec()
        options = SamplerOptions(n_samples=50, seed=99)
        fit1 = fit_full_rank(data, EXP, spec, BetaPrior.flat(), options)
        fit2 = fit_full_rank(data, EXP, spec, BetaPrior.flat(), options)
        np.testing.assert_array_equal(fit1.chain.samples, fit2.chain.samples)
        np.testing.assert_array_equal(fit1.chain.log_targets,
                                      fit2.chain.log_targets)

    def test_adaptive_variant_runs(self, rng):
        data = make_dataset(rng, 12)
        spec = make_spec()
        options = SamplerOptions(n_samples=60, seed=3, adaptive=True,
                                 adapt_batch=10)
        fit = fit_full_rank(data, EXP, spec, BetaPrior.flat(), options)
        assert fit.chain.n_proposals == 60 * 3
        assert np.isfinite(fit.chain.samples).all()

    def test_samples_stay_in_support(self, rng):
        data = make_dataset(rng, 10)
        spec = make_spec()
        options = SamplerOptions(n_samples=200, seed=11)
        fit = fit_full_rank(data, EXP, spec, BetaPrior.flat(), options)
        s = fit.chain.samples
        assert np.all(s[:, 0] > 0)
        assert np.all(s[:, 1] > 0)
        assert np.all((s[:, 2] > 3.0) & (s[:, 2] < 30.0))

    def test_progress_lines_monotone(self, rng):
        data = make_dataset(rng, 10)
        spec = make_spec()
        lines = []
        options = SamplerOptions(n_samples=100, report_interval=30, seed=5)
        fit_full_rank(data, EXP, spec, BetaPrior.flat(), options,
                      progress=lines.append)
        sampled = [l for l in lines if l.startswith("Sampled:")]
        pcts = [float(l.split()[-1].rstrip("%")) for l in sampled]
        assert pcts == sorted(pcts)
        assert pcts[-1] == 100.0
        assert any("Overall Metrop. Acceptance rate:" in l for l in lines)
        assert any(l.startswith("Model fit with 10 observations.") for l in lines)


class TestMetropolisDriver:
    def test_constant_offset_invariance(self, rng):
        # adding a constant to the log-target must not change any decision
        spec = make_spec()

        def target(z):
            return -0.5 * float(z @ z), None

        def target_shifted(z):
            return 1234.5 - 0.5 * float(z @ z), None

        tuning = np.array([0.7, 0.7, 0.7])
        z1 = np.zeros(3)
        z2 = np.zeros(3)
        lp1, _ = target(z1)
        lp2, _ = target_shifted(z2)
        rng_a = np.random.default_rng(17)
        rng_b = np.random.default_rng(17)
        for _ in range(500):
            z1, lp1, _, acc1 = joint_rw_step(z1, lp1, None, tuning, target,
                                             rng_a)
            z2, lp2, _, acc2 = joint_rw_step(z2, lp2, None, tuning,
                                             target_shifted, rng_b)
            assert acc1 == acc2
            np.testing.assert_array_equal(z1, z2)
