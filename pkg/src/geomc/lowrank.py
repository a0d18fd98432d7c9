"""Low-rank predictive-process Gibbs sampler.

The spatial process is replaced by its conditional expectation given r knot
values (optionally with the heteroskedastic "modified" correction absorbing
the lost pointwise variance into the noise diagonal).  Each Gibbs scan draws
the slopes from their full conditional through the Sherman-Woodbury-Morrison
inverse ``Sigma^{-1} = D^{-1/2}(I - H'H)D^{-1/2}`` and then Metropolis-updates
the process parameters; everything costs O(n r^2) per iteration and no n x n
matrix is ever materialized.

Two equivalent parametrizations are supported.  The default "alternative"
one takes ``K = C*^{-1}`` and ``Z`` the data-knot cross-covariance, so the
``K^{-1}`` needed by the SWM factorization is the knot covariance ``C*``
itself and no r x r inverse is ever computed; the "standard" one
(``K = C*``, ``Z`` the interpolation basis) exists for equivalence checks.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .covariance import cov_from_dist, pairwise_distances
from .errors import DuplicateCoords, NotPositiveDefinite, SingularTriangular
from .fullrank import ThetaChain
from .linalg import chol, solve_spd_from_chol, trsolve
from .model import build_knots
from .recover import draw_beta
from .report import ProgressReporter, banner_lines, sampling_header
from .sampling import (
    AcceptanceTracker,
    AdaptiveScales,
    componentwise_rw_sweep,
    joint_rw_step,
)

logger = logging.getLogger(__name__)

__all__ = [
    "PPStructure",
    "PPGeometry",
    "LowRankFit",
    "build_pp_structure",
    "swm_apply",
    "fit_lowrank",
]

# floor (relative to sigma^2) on the modified-process variance adjustment;
# Schur positivity guarantees >= 0 up to round-off
_ADJ_TOL = 1e-8


@dataclass
class PPStructure:
    """Covariance pieces of one predictive-process parameter state.

    ``z`` is n x r, ``c_star`` the r x r knot covariance (its factor stands
    in for K or K^{-1} depending on the parametrization), ``d_diag`` the
    noise diagonal.  ``h``, ``l`` and the cached log-determinant are the
    SWM factorization of Eq-style ``Sigma^{-1}``.
    """

    knots: np.ndarray
    c_star: np.ndarray
    c_star_chol: object
    cross: np.ndarray
    z: np.ndarray
    d_diag: np.ndarray
    parametrization: str
    params: object
    l: object = field(repr=False, default=None)
    h: np.ndarray = field(repr=False, default=None)
    sqrt_d_inv: np.ndarray = field(repr=False, default=None)
    half_log_det: float = field(repr=False, default=0.0)

    @property
    def r(self):
        return self.knots.shape[0]

    @property
    def n(self):
        return self.z.shape[0]

    def k_inv_matrix(self):
        """K^{-1} as an explicit r x r matrix (no inversion in the default
        parametrization, triangular solves otherwise)."""
        if self.parametrization == "alternative":
            return self.c_star
        return solve_spd_from_chol(self.c_star_chol, np.eye(self.r))

    def k_matrix(self):
        if self.parametrization == "alternative":
            return solve_spd_from_chol(self.c_star_chol, np.eye(self.r))
        return self.c_star

    def knot_effects(self, alpha):
        """Spatial effects at the knots implied by a coefficient draw."""
        if self.parametrization == "alternative":
            return self.c_star @ alpha
        return alpha


class PPGeometry:
    """Distance matrices for one (data, knots) pair, computed once per fit."""

    def __init__(self, coords, knots, family):
        self.knots = knots
        self.family = family
        self.knot_dist = pairwise_distances(knots, knots)
        self.cross_dist = pairwise_distances(coords, knots)
        self.n = coords.shape[0]

    def build(self, params, modified, parametrization="alternative"):
        """PPStructure at one parameter value, including the SWM pieces."""
        if parametrization not in ("alternative", "standard"):
            raise ValueError(f"unknown parametrization {parametrization!r}")
        n, r = self.n, self.knots.shape[0]
        c_star = cov_from_dist(self.knot_dist, self.family, params)
        try:
            return self._assemble(params, modified, parametrization, c_star)
        except NotPositiveDefinite as err:
            off = self.knot_dist[~np.eye(r, dtype=bool)] if r > 1 else None
            if off is not None and off.size and off.min() == 0.0:
                raise DuplicateCoords("coincident knots") from err
            raise NotPositiveDefinite(
                f"knot covariance not positive definite (knots too close "
                f"for this family): {err}",
                pivot=err.pivot,
            ) from err

    def _assemble(self, params, modified, parametrization, c_star):
        n, r = self.n, self.knots.shape[0]
        c_star_chol = chol(c_star, check_symmetry=False)
        cross = cov_from_dist(self.cross_dist, self.family, params)

        if modified:
            s = trsolve(c_star_chol, cross.T)
            adj = params.sigma_sq - np.einsum("ij,ij->j", s, s)
            if adj.min() < -_ADJ_TOL * params.sigma_sq:
                raise NotPositiveDefinite(
                    "modified predictive-process adjustment went negative"
                )
            np.maximum(adj, 0.0, out=adj)
            d_diag = adj + params.tau_sq
        else:
            d_diag = np.full(n, params.tau_sq)

        if parametrization == "alternative":
            z = cross
            k_inv = c_star
        else:
            z = solve_spd_from_chol(c_star_chol, cross.T).T
            k_inv = solve_spd_from_chol(c_star_chol, np.eye(r))

        pp = PPStructure(
            knots=self.knots,
            c_star=c_star,
            c_star_chol=c_star_chol,
            cross=cross,
            z=z,
            d_diag=d_diag,
            parametrization=parametrization,
            params=params,
        )
        _attach_swm(pp, k_inv)
        return pp


def _attach_swm(pp, k_inv):
    """Factorize the SWM pieces: W = D^{-1/2}Z, L = chol(K^{-1} + W'W),
    H = trsolve(L, W'), plus the theta-only half log-determinant."""
    sqrt_d_inv = 1.0 / np.sqrt(pp.d_diag)
    w = sqrt_d_inv[:, None] * pp.z
    a = k_inv + w.T @ w
    pp.l = chol(a, check_symmetry=False)
    pp.h = trsolve(pp.l, w.T)
    pp.sqrt_d_inv = sqrt_d_inv
    # -1/2 log|D + Z K Z'| decomposes into the D diagonal and
    # T = chol(I_r - H H'); validated against dense oracles in the tests
    hh = pp.h @ pp.h.T
    t_mat = np.eye(pp.r) - hh
    t_chol = chol(t_mat, check_symmetry=False)
    pp.half_log_det = float(
        -0.5 * np.sum(np.log(pp.d_diag)) + np.sum(np.log(np.diag(t_chol.lower)))
    )


def build_pp_structure(coords, knots, family, params, modified,
                       parametrization="alternative"):
    """One-off PPStructure for arbitrary coordinates and knots."""
    return PPGeometry(np.asarray(coords, dtype=np.float64), knots,
                      family).build(params, modified, parametrization)


def swm_apply(pp, rhs):
    """``(D + Z K Z')^{-1} rhs`` in O(n r) per column via the SWM identity."""
    rhs = np.asarray(rhs, dtype=np.float64)
    scale = pp.sqrt_d_inv if rhs.ndim == 1 else pp.sqrt_d_inv[:, None]
    s = scale * rhs
    t = s - pp.h.T @ (pp.h @ s)
    return scale * t


def _beta_factors_pp(pp, data, beta_prior):
    """Slope full-conditional factors via the SWM pieces (Eq-8 recipe)."""
    v = pp.sqrt_d_inv * data.y
    big_v = pp.sqrt_d_inv[:, None] * data.x
    hv = pp.h @ v
    h_big_v = pp.h @ big_v
    if beta_prior.is_flat:
        b = big_v.T @ v - h_big_v.T @ hv
        m = big_v.T @ big_v - h_big_v.T @ h_big_v
    else:
        lb = beta_prior.sigma_chol()
        prior_prec = solve_spd_from_chol(lb, np.eye(data.p))
        b = prior_prec @ beta_prior.mu_beta + big_v.T @ v - h_big_v.T @ hv
        m = prior_prec + big_v.T @ big_v - h_big_v.T @ h_big_v
    return b, chol(m, check_symmetry=False)


def gibbs_update_beta(pp, data, beta_prior, rng):
    """Draw the slopes from their full conditional given the current theta."""
    b, l_b = _beta_factors_pp(pp, data, beta_prior)
    return draw_beta(b, l_b, rng.standard_normal(data.p))


def theta_log_target(pp, data, beta, theta_spec):
    """Marginal-in-alpha log target at the structure's parameters
    (constrained-scale prior, constants omitted)."""
    values = [getattr(pp.params, n) for n in theta_spec.names]
    lp = theta_spec.log_prior_constrained(values)
    return lp + _quad_part(pp, data, beta) + pp.half_log_det


def _quad_part(pp, data, beta):
    v = pp.sqrt_d_inv * (data.y - data.x @ beta)
    w = pp.h @ v
    return -0.5 * float(v @ v - w @ w)


@dataclass
class LowRankFit:
    """A finished predictive-process fit; theta and beta chains align by
    iteration."""

    data: object
    family: object
    theta_spec: object
    beta_prior: object
    options: object
    knots: np.ndarray
    modified: bool
    parametrization: str
    chain: ThetaChain
    beta: np.ndarray
    _geometry: PPGeometry = field(repr=False, default=None)

    def build_structure(self, params):
        return self._geometry.build(params, self.modified, self.parametrization)


def fit_lowrank(data, family, knot_spec, theta_spec, beta_prior, options,
                progress=None, parametrization="alternative"):
    """Run the predictive-process Gibbs sampler.

    Each iteration draws beta from its full conditional and then proposes
    theta on the transformed scale (jointly, or per component with batch
    adaptation when ``options.adaptive``).  Numerical failures while
    evaluating a proposal count as rejections with a logged warning.
    """
    knots = build_knots(knot_spec, data.coords)
    modified = knot_spec.modified
    geometry = PPGeometry(data.coords, knots, family)
    rng = np.random.default_rng(options.seed)
    dim = len(theta_spec)
    n_samples = options.n_samples
    theta_samples = np.empty((n_samples, dim))
    log_targets = np.empty(n_samples)
    beta_samples = np.empty((n_samples, data.p))
    tracker = AcceptanceTracker()
    adapt = (
        AdaptiveScales(theta_spec.tuning_vector(), options.adapt_batch,
                       options.adapt_target)
        if options.adaptive
        else None
    )
    tuning = theta_spec.tuning_vector()

    if progress is not None:
        for line in banner_lines(data.n, data.p, family, n_samples, theta_spec,
                                 beta_prior, knot_count=knots.shape[0],
                                 modified=modified):
            progress(line)
        for line in sampling_header():
            progress(line)
    reporter = ProgressReporter(progress, n_samples, options.report_interval)

    z = theta_spec.transform(theta_spec.start_vector())
    pp = geometry.build(theta_spec.to_process_params(theta_spec.start_vector()),
                        modified, parametrization)
    beta = np.zeros(data.p)

    def evaluate(z_prop):
        params = theta_spec.to_process_params(theta_spec.inverse_transform(z_prop))
        try:
            pp_prop = geometry.build(params, modified, parametrization)
        except (NotPositiveDefinite, SingularTriangular, FloatingPointError) as err:
            logger.warning("rejecting theta proposal: %s", err)
            return -math.inf, None
        lp = (
            _quad_part(pp_prop, data, beta)
            + pp_prop.half_log_det
            + theta_spec.log_prior_with_jacobian(z_prop)
        )
        return lp, pp_prop

    for i in range(n_samples):
        beta = gibbs_update_beta(pp, data, beta_prior, rng)
        beta_samples[i] = beta
        # the theta target depends on the freshly drawn beta
        lp = (
            _quad_part(pp, data, beta)
            + pp.half_log_det
            + theta_spec.log_prior_with_jacobian(z)
        )
        if adapt is None:
            z, lp, pp_new, accepted = joint_rw_step(z, lp, pp, tuning, evaluate,
                                                    rng)
            tracker.record(accepted)
        else:
            z, lp, pp_new, mask = componentwise_rw_sweep(z, lp, pp,
                                                         adapt.scales,
                                                         evaluate, rng)
            adapt.record(mask)
            tracker.record_count(int(mask.sum()), mask.shape[0])
        if pp_new is not None:
            pp = pp_new
        theta_samples[i] = theta_spec.inverse_transform(z)
        log_targets[i] = lp
        if reporter.due(i + 1):
            reporter.report(i + 1, tracker.take_interval_rate(),
                            tracker.overall_rate)

    chain = ThetaChain(
        samples=theta_samples,
        log_targets=log_targets,
        names=theta_spec.names,
        accept_rate=tracker.overall_rate,
        n_proposals=tracker.proposed,
    )
    return LowRankFit(
        data=data,
        family=family,
        theta_spec=theta_spec,
        beta_prior=beta_prior,
        options=options,
        knots=knots,
        modified=modified,
        parametrization=parametrization,
        chain=chain,
        beta=beta_samples,
        _geometry=geometry,
    )
