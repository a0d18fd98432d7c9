"""Posterior predictive sampling at new locations.

Per retained posterior draw the predictive law is the conditional of the
joint Gaussian over (data, new) outcomes; by default each new location is
predicted independently (a t x t factorization is only needed when a joint
draw across locations is explicitly requested).  Low-rank fits additionally
support the cheap "via-alpha" path that propagates the sampled basis
coefficients instead of conditioning on the data vector.

Predicted values are new observations: the predictive variance includes the
nugget.  ``latent=True`` drops it to predict the noise-free surface.
"""

from dataclasses import dataclass

import numpy as np

from .covariance import cov_from_dist, pairwise_distances
from .errors import DimensionMismatch, InvalidParam, NotPositiveDefinite
from .linalg import chol, trsolve
from .recover import recover
from .report import ProgressReporter
from .sampling import retained_indices


def _substream(seed, index):
    return np.random.default_rng([seed, _SEED_STREAM, int(index)])

__all__ = ["PredictionRequest", "PredictiveSamples", "predict"]

_SEED_STREAM = 0x912ED
_VAR_FLOOR_TOL = 1e-10


@dataclass(frozen=True)
class PredictionRequest:
    """Where and how to predict.

    ``mode`` is "conditional" (joint-normal conditioning on the data) or
    "via-alpha" (low-rank fits only).  ``joint=True`` draws all t locations
    jointly from the t x t predictive covariance instead of the default
    per-location conditionals.
    """

    new_coords: np.ndarray
    x0: np.ndarray
    start: int | None = None
    thin: int = 1
    mode: str = "conditional"
    joint: bool = False
    latent: bool = False

    def __post_init__(self):
        object.__setattr__(
            self, "new_coords", np.asarray(self.new_coords, dtype=np.float64)
        )
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=np.float64))
        if self.new_coords.ndim != 2 or self.new_coords.shape[0] < 1:
            raise DimensionMismatch("new_coords must be (t, 2) with t >= 1")
        if self.x0.ndim != 2 or self.x0.shape[0] != self.new_coords.shape[0]:
            raise DimensionMismatch("x0 must have one row per new location")
        if self.mode not in ("conditional", "via-alpha"):
            raise InvalidParam(f"unknown prediction mode {self.mode!r}")

    @property
    def t(self):
        return self.new_coords.shape[0]


@dataclass
class PredictiveSamples:
    """Predictive draws, one row per location, one column per retained
    sample."""

    y0: np.ndarray  # (t, M')
    indices: np.ndarray


def _floor_variances(var, scale, sample_index):
    bad = var < -_VAR_FLOOR_TOL * scale
    if bad.any():
        raise NotPositiveDefinite(
            f"negative predictive variance at retained sample {sample_index}"
        )
    return np.maximum(var, 0.0)


def _retained_beta_theta(fit, request):
    options = fit.options
    start = request.start if request.start is not None else max(options.burn_in, 1)
    idx = retained_indices(fit.chain.n_samples, start, thin=request.thin)
    thetas = fit.chain.samples[idx]
    return idx, thetas


def conditional_moments(data, family, params, beta, new_coords, x0,
                        joint=False, latent=False, _dists=None):
    """Predictive mean and (co)variance at one fixed (beta, theta).

    Follows the triangular-solve recipe: ``[u:V] = trsolve(chol(C11),
    [y - X beta : C12])``, ``mu_p = X0 beta + V'u``, ``Sigma_p = C22 - V'V``.
    Returns ``(mu, var_diag)`` for independent per-location prediction or
    ``(mu, Sigma_p)`` when ``joint``.
    """
    n = data.n
    t = new_coords.shape[0]
    if _dists is None:
        dist = pairwise_distances(data.coords, data.coords)
        cross_dist = pairwise_distances(data.coords, new_coords)
        new_dist = pairwise_distances(new_coords, new_coords) if joint else None
    else:
        dist, cross_dist, new_dist = _dists
    c11 = cov_from_dist(dist, family, params)
    c11.flat[:: n + 1] += params.tau_sq
    l = chol(c11, check_symmetry=False, overwrite_a=True, clean=False)
    c12 = cov_from_dist(cross_dist, family, params)
    resid = data.y - data.x @ beta
    uv = trsolve(l, np.column_stack([resid, c12]))
    u = uv[:, 0]
    v = uv[:, 1:]
    mu = x0 @ beta + v.T @ u
    if joint:
        c22 = cov_from_dist(new_dist, family, params)
        if not latent:
            c22.flat[:: t + 1] += params.tau_sq
        sigma_p = c22 - v.T @ v
        return mu, 0.5 * (sigma_p + sigma_p.T)
    c22_diag = np.full(t, params.sigma_sq)
    if not latent:
        c22_diag += params.tau_sq
    return mu, c22_diag - np.einsum("ij,ij->j", v, v)


def _predict_full_rank(fit, request, idx, thetas, betas, seed, reporter):
    data, family, spec = fit.data, fit.family, fit.theta_spec
    t = request.t
    if request.x0.shape[1] != data.p:
        raise DimensionMismatch("x0 column count must match the fitted design")
    dists = (
        pairwise_distances(data.coords, data.coords),
        pairwise_distances(data.coords, request.new_coords),
        pairwise_distances(request.new_coords, request.new_coords)
        if request.joint
        else None,
    )
    out = np.empty((t, idx.shape[0]))
    for k, row in enumerate(thetas):
        rng = _substream(seed, idx[k])
        params = spec.to_process_params(row)
        mu, spread = conditional_moments(
            data, family, params, betas[k], request.new_coords, request.x0,
            joint=request.joint, latent=request.latent, _dists=dists,
        )
        if request.joint:
            try:
                lp = chol(spread, check_symmetry=False)
            except NotPositiveDefinite as err:
                raise NotPositiveDefinite(
                    f"joint predictive covariance failed at retained sample "
                    f"{k}; use joint=False (t=1 conditionals) or mode="
                    f"'via-alpha' for low-rank fits: {err}",
                    pivot=err.pivot,
                ) from err
            out[:, k] = mu + lp.lower @ rng.standard_normal(t)
        else:
            var = _floor_variances(spread, params.sigma_sq + params.tau_sq, k)
            out[:, k] = mu + np.sqrt(var) * rng.standard_normal(t)
        if reporter.due(k + 1):
            reporter.report(k + 1)
    return out


def _predict_low_rank(fit, request, idx, thetas, betas, alphas, seed,
                      reporter):
    data, spec, family = fit.data, fit.theta_spec, fit.family
    t = request.t
    if request.x0.shape[1] != data.p:
        raise DimensionMismatch("x0 column count must match the fitted design")
    knot_dist = pairwise_distances(request.new_coords, fit.knots)
    new_dist = (
        pairwise_distances(request.new_coords, request.new_coords)
        if request.joint
        else None
    )
    via_alpha = request.mode == "via-alpha"
    out = np.empty((t, idx.shape[0]))
    for k, row in enumerate(thetas):
        rng = _substream(seed, idx[k])
        params = spec.to_process_params(row)
        pp = fit.build_structure(params)
        cross0 = cov_from_dist(knot_dist, family, params)  # t x r
        s0 = trsolve(pp.c_star_chol, cross0.T)  # r x t
        pp_var0 = np.einsum("ij,ij->j", s0, s0)  # Z0 K Z0' diagonal
        if fit.modified:
            d0 = np.maximum(params.sigma_sq - pp_var0, 0.0) + params.tau_sq
        else:
            d0 = np.full(t, params.tau_sq)
        if via_alpha:
            if pp.parametrization == "alternative":
                z0 = cross0
            else:
                z0 = trsolve(pp.c_star_chol, s0, side="upper").T
            mu = request.x0 @ betas[k] + z0 @ alphas[k]
            var = d0 - params.tau_sq if request.latent else d0
            out[:, k] = mu + np.sqrt(var) * rng.standard_normal(t)
        else:
            # C12 = Z K Z0' evaluated through the knot factor
            s = trsolve(pp.c_star_chol, pp.cross.T)  # r x n
            c12 = s.T @ s0  # n x t
            resid = data.y - data.x @ betas[k]
            mu = request.x0 @ betas[k] + c12.T @ _swm_vec(pp, resid)
            u = pp.sqrt_d_inv[:, None] * c12
            v = pp.h @ u
            quad = np.einsum("ij,ij->j", u, u) - np.einsum("ij,ij->j", v, v)
            if request.joint:
                c22 = s0.T @ s0
                c22.flat[:: t + 1] += d0 if not request.latent else (
                    d0 - params.tau_sq
                )
                sigma_p = c22 - (u.T @ u - v.T @ v)
                sigma_p = 0.5 * (sigma_p + sigma_p.T)
                try:
                    lp = chol(sigma_p, check_symmetry=False)
                except NotPositiveDefinite as err:
                    raise NotPositiveDefinite(
                        f"joint predictive covariance failed at retained "
                        f"sample {k}; use joint=False or mode='via-alpha': "
                        f"{err}",
                        pivot=err.pivot,
                    ) from err
                out[:, k] = mu + lp.lower @ rng.standard_normal(t)
            else:
                c22_diag = pp_var0 + d0
                if request.latent:
                    c22_diag -= params.tau_sq
                var = c22_diag - quad
                var = _floor_variances(var, params.sigma_sq + params.tau_sq, k)
                out[:, k] = mu + np.sqrt(var) * rng.standard_normal(t)
        if reporter.due(k + 1):
            reporter.report(k + 1)
    return out


def _swm_vec(pp, vec):
    s = pp.sqrt_d_inv * vec
    return pp.sqrt_d_inv * (s - pp.h.T @ (pp.h @ s))


def predict(fit, request, recovered=None, seed=None, progress=None,
            report_interval=0):
    """Posterior predictive draws at the requested locations.

    ``recovered`` supplies aligned slope (and, for via-alpha, coefficient)
    draws; when omitted it is computed with the request's retention rule.
    Full-rank fits support the conditional mode only.
    """
    low_rank = hasattr(fit, "knots")
    idx, thetas = _retained_beta_theta(fit, request)
    if request.mode == "via-alpha" and not low_rank:
        raise InvalidParam(
            "via-alpha prediction needs the low-rank noise-diagonal structure"
        )
    alphas = None
    if low_rank:
        betas = fit.beta[idx]
        if request.mode == "via-alpha":
            if recovered is None:
                recovered = recover(
                    fit,
                    start=request.start,
                    thin=request.thin,
                )
            if not np.array_equal(recovered.indices, idx):
                raise InvalidParam(
                    "recovered samples do not align with the prediction "
                    "retention rule"
                )
            alphas = recovered.alpha
    else:
        if recovered is None:
            recovered = recover(fit, start=request.start, thin=request.thin)
        if not np.array_equal(recovered.indices, idx):
            raise InvalidParam(
                "recovered samples do not align with the prediction retention rule"
            )
        betas = recovered.beta
    base_seed = fit.options.seed if seed is None else seed
    reporter = ProgressReporter(progress, idx.shape[0], report_interval,
                                show_rates=False)
    if low_rank:
        y0 = _predict_low_rank(fit, request, idx, thetas, betas, alphas,
                               base_seed, reporter)
    else:
        y0 = _predict_full_rank(fit, request, idx, thetas, betas, base_seed,
                                reporter)
    return PredictiveSamples(y0=y0, indices=idx)
