"""Composition sampling of the slopes and latent spatial effects from stored
process-parameter draws.

For each retained theta the slope draw follows the nested-triangular-solve
recipe ``beta = L_B^{-T}(L_B^{-1} b) + L_B^{-T} z`` with
``L_B = chol(Sigma_b^{-1} + U'U)``, and the effect draw uses the Henderson
identity ``(K^{-1} + G^{-1})^{-1} = G - G (K + G)^{-1} G`` so that the
process covariance K is never inverted (it may be numerically singular for
smooth correlation functions).  Retention keeps iterations ``start,
start+thin, ...`` (1-based, endpoint inclusive); recovered rows align with
the retained theta rows.
"""

from dataclasses import dataclass

import numpy as np

from .covariance import cov_from_dist, cross_cov, pairwise_distances
from .errors import NotPositiveDefinite
from .linalg import chol, solve_spd_from_chol, trsolve
from .report import ProgressReporter, recover_header
from .sampling import retained_indices

__all__ = [
    "RecoveredSamples",
    "recover",
    "henderson_draw",
    "beta_factors",
    "draw_beta",
]

_SEED_STREAM = 0x5EC0


@dataclass
class RecoveredSamples:
    """Aligned posterior draws keyed by retained chain row."""

    indices: np.ndarray  # 0-based retained iteration indices
    theta_subset: np.ndarray  # (M', dim theta), constrained scale
    beta: np.ndarray  # (M', p)
    w: np.ndarray  # (M', n): latent effects at the data locations
    w_knots: np.ndarray | None = None  # (M', r) for low-rank fits
    alpha: np.ndarray | None = None  # (M', r) raw low-rank coefficients

    @property
    def n_retained(self):
        return self.indices.shape[0]


def beta_factors(sigma_chol, y, x, beta_prior):
    """Mean vector ``b`` and ``L_B`` of the slope full conditional."""
    yx = np.column_stack([y, x])
    vu = trsolve(sigma_chol, yx)
    v = vu[:, 0]
    u = vu[:, 1:]
    if beta_prior.is_flat:
        b = u.T @ v
        m = u.T @ u
    else:
        lb = beta_prior.sigma_chol()
        prior_prec = solve_spd_from_chol(lb, np.eye(len(beta_prior.mu_beta)))
        b = prior_prec @ beta_prior.mu_beta + u.T @ v
        m = prior_prec + u.T @ u
    return b, chol(m, check_symmetry=False)


def draw_beta(b, l_b, z):
    """One slope draw from N(Bb, B) given ``L_B`` and standard-normal z."""
    mean = solve_spd_from_chol(l_b, b)
    return mean + trsolve(l_b, z, side="upper")


def henderson_draw(k_mat, g_mat, b, z):
    """One latent-effect draw from N(Bb, B), B = (K^{-1} + G^{-1})^{-1}.

    Evaluated as ``G - W'W`` with ``W = trsolve(chol(K+G), G)``.  If the
    subtraction loses definiteness to round-off, the factorization is
    retried once after exact symmetrization.
    """
    l = chol(k_mat + g_mat, check_symmetry=False)
    w = trsolve(l, g_mat)
    m = g_mat - w.T @ w
    try:
        l_b = chol(m, check_symmetry=False)
    except NotPositiveDefinite:
        m = 0.5 * (m + m.T)
        l_b = chol(m, check_symmetry=False)
    lower = l_b.lower
    return lower @ (lower.T @ b) + lower @ z


def _retained_theta(fit, start, thin):
    options = fit.options
    if start is None:
        start = max(options.burn_in, 1)
    idx = retained_indices(fit.chain.n_samples, start, thin)
    return idx, fit.chain.samples[idx]


def _substream(seed, stream, index):
    """Per-retained-sample generator; keys draws to the chain row so that
    retained samples are independent and reordering them reorders outputs."""
    return np.random.default_rng([seed, stream, int(index)])


def _recover_full_rank(fit, idx, thetas, conditioning, seed, reporter):
    data, family, spec = fit.data, fit.family, fit.theta_spec
    prior = fit.beta_prior
    if conditioning == "auto":
        conditioning = "beta" if prior.is_flat else "mu_beta"
    if prior.is_flat and conditioning == "mu_beta":
        raise ValueError("mu_beta conditioning needs an informative beta prior")
    n, p = data.n, data.p
    dist = pairwise_distances(data.coords, data.coords)
    m_ret = idx.shape[0]
    beta = np.empty((m_ret, p))
    w = np.empty((m_ret, n))
    if conditioning == "mu_beta":
        x_sigma_xt = (data.x @ prior.sigma_beta) @ data.x.T
        resid_mu = data.y - data.x @ prior.mu_beta

    for k, row in enumerate(thetas):
        rng = _substream(seed, _SEED_STREAM, idx[k])
        params = spec.to_process_params(row)
        k_mat = cov_from_dist(dist, family, params, include_nugget=False)
        sigma = k_mat.copy()
        sigma.flat[:: n + 1] += params.tau_sq
        l = chol(sigma, check_symmetry=False)
        b_vec, l_b = beta_factors(l, data.y, data.x, prior)
        beta[k] = draw_beta(b_vec, l_b, rng.standard_normal(p))
        if conditioning == "mu_beta":
            # alpha | theta, y with beta set to its prior mean (Z = I)
            g = x_sigma_xt.copy()
            g.flat[:: n + 1] += params.tau_sq
            lg = chol(g, check_symmetry=False)
            b_alpha = solve_spd_from_chol(lg, resid_mu)
        else:
            # alpha | beta, theta, y: the residual variance is the nugget
            g = np.zeros((n, n))
            g.flat[:: n + 1] = params.tau_sq
            b_alpha = (data.y - data.x @ beta[k]) / params.tau_sq
        w[k] = henderson_draw(k_mat, g, b_alpha, rng.standard_normal(n))
        if reporter.due(k + 1):
            reporter.report(k + 1)
    return beta, w, None, None


def _recover_low_rank(fit, idx, thetas, seed, reporter):
    data, family, spec = fit.data, fit.family, fit.theta_spec
    n = data.n
    r = fit.knots.shape[0]
    m_ret = idx.shape[0]
    beta = fit.beta[idx]
    w_tilde = np.empty((m_ret, n))
    w_knots = np.empty((m_ret, r))
    alpha_out = np.empty((m_ret, r))
    eye_r = np.eye(r)
    for k, row in enumerate(thetas):
        rng = _substream(seed, _SEED_STREAM, idx[k])
        params = spec.to_process_params(row)
        pp = fit.build_structure(params)
        d_inv = 1.0 / pp.d_diag
        resid = data.y - data.x @ beta[k]
        b_alpha = pp.z.T @ (d_inv * resid)
        g_inv = (pp.z.T * d_inv) @ pp.z
        g = solve_spd_from_chol(chol(g_inv, check_symmetry=False), eye_r)
        k_mat = pp.k_matrix()
        alpha = henderson_draw(k_mat, g, b_alpha, rng.standard_normal(r))
        alpha_out[k] = alpha
        w_knots[k] = pp.knot_effects(alpha)
        w_tilde[k] = pp.z @ alpha
        if reporter.due(k + 1):
            reporter.report(k + 1)
    return beta, w_tilde, w_knots, alpha_out


def recover(fit, start=None, thin=1, conditioning="auto", seed=None,
            progress=None, report_interval=0):
    """Draw slopes and latent effects for the retained theta samples.

    Parameters
    ----------
    fit : FullRankFit or LowRankFit
    start, thin : int
        Retention rule (1-based start, inclusive endpoint); ``start``
        defaults to the burn-in implied by the fit options.
    conditioning : str
        Full-rank effect draws condition on the slope prior mean
        ("mu_beta", the default for informative priors) or on the drawn
        slopes ("beta", required for flat priors).
    seed : int or None
        Base seed of the per-sample substreams; defaults to the fit seed.
        Each retained chain row draws from its own substream, so recovery
        is identical whether rows are processed in order, permuted, or in
        parallel.
    """
    idx, thetas = _retained_theta(fit, start, thin)
    base_seed = fit.options.seed if seed is None else seed
    if progress is not None:
        for line in recover_header():
            progress(line)
    reporter = ProgressReporter(progress, idx.shape[0], report_interval,
                                show_rates=False)
    if hasattr(fit, "knots"):
        beta, w, w_knots, alpha = _recover_low_rank(fit, idx, thetas,
                                                    base_seed, reporter)
    else:
        beta, w, w_knots, alpha = _recover_full_rank(
            fit, idx, thetas, conditioning, base_seed, reporter
        )
    return RecoveredSamples(
        indices=idx,
        theta_subset=thetas,
        beta=beta,
        w=w,
        w_knots=w_knots,
        alpha=alpha,
    )
