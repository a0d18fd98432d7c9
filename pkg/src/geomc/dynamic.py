"""Discrete-time dynamic spatio-temporal model.

Measurement equation ``y_t(s) = x_t(s)'beta_t + u_t(s) + eps_t(s)`` with
``eps_t ~ N(0, tau_t^2)``; transition equations ``beta_t = beta_{t-1} +
eta_t`` with ``eta_t ~ N(0, Sigma_eta)`` and ``u_t = u_{t-1} + w_t`` with
``w_t`` a spatial Gaussian process having variance ``sigma_t^2`` and decay
``phi_t``; ``beta_0 ~ N(m_0, Sigma_0)`` and ``u_0 = 0`` fixed.  Every time
step carries its own variance and decay parameters.

The Gibbs scan imputes missing outcomes first (so all full conditionals see
a complete data matrix), then updates each block from its conditional given
its temporal neighbors, in time order: beta_0..beta_T, u_1..u_T, Sigma_eta
(conjugate inverse-Wishart via Bartlett draws), the per-step variances
(conjugate inverse-gamma), and finally a per-step Metropolis update of the
decay parameters on the transformed scale.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .covariance import as_coords, corr_from_dist, pairwise_distances
from .errors import (
    AllMissingStep,
    DimensionMismatch,
    InvalidParam,
    NotPositiveDefinite,
)
from .linalg import CholFactor, chol, solve_spd_from_chol, trsolve
from .model import ThetaParam
from .recover import draw_beta
from .report import ProgressReporter, dynamic_banner_lines, sampling_header
from .sampling import AcceptanceTracker, AdaptiveScales

logger = logging.getLogger(__name__)

__all__ = [
    "DynamicDataset",
    "DynamicPriors",
    "DynamicStarting",
    "DynamicFit",
    "fit_dynamic",
    "impute_missing",
    "draw_inv_wishart",
]


@dataclass(frozen=True)
class DynamicDataset:
    """Station coordinates, an n x N_t outcome matrix (NaN marks missing),
    and one n x p design matrix per time step (the same stations are
    monitored at every step)."""

    coords: np.ndarray
    y: np.ndarray  # (n, nt) with NaN at missing cells
    x: np.ndarray  # (nt, n, p)

    def __post_init__(self):
        coords = as_coords(self.coords)
        y = np.asarray(self.y, dtype=np.float64)
        x = np.asarray(self.x, dtype=np.float64)
        if y.ndim != 2:
            raise DimensionMismatch("y must be (n, N_t)")
        n, nt = y.shape
        if x.shape != (nt, n, x.shape[2]) or x.shape[2] < 1:
            raise DimensionMismatch(
                f"x must be (N_t, n, p) matching y {y.shape}, got {x.shape}"
            )
        if coords.shape[0] != n:
            raise DimensionMismatch("one coordinate pair per station required")
        if not np.isfinite(x).all():
            raise InvalidParam("design matrices must be finite")
        observed = ~np.isnan(y)
        if not np.isfinite(y[observed]).all():
            raise InvalidParam("observed outcomes must be finite")
        steps_empty = np.flatnonzero(~observed.any(axis=0))
        if steps_empty.size:
            raise AllMissingStep(
                f"time step {steps_empty[0] + 1} has no observed outcome"
            )
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def n_steps(self):
        return self.y.shape[1]

    @property
    def p(self):
        return self.x.shape[2]

    @property
    def missing_mask(self):
        return np.isnan(self.y)

    @property
    def n_missing(self):
        return int(np.isnan(self.y).sum())


def _per_step(values, nt, name):
    seq = list(values) if isinstance(values, (list, tuple)) else [values] * nt
    if len(seq) != nt:
        raise InvalidParam(f"{name} needs one entry per time step ({nt})")
    return seq


@dataclass(frozen=True)
class DynamicPriors:
    """beta_0 ~ N(m0, sigma0); Sigma_eta ~ IW(df, scale) with mean
    scale/(df - p - 1); per-step inverse-gamma variances and uniform decay
    priors."""

    m0: np.ndarray
    sigma0: np.ndarray
    sigma_eta_df: float
    sigma_eta_scale: np.ndarray
    sigma_sq: tuple
    tau_sq: tuple
    phi: tuple

    @classmethod
    def build(cls, nt, m0, sigma0, sigma_eta_df, sigma_eta_scale, sigma_sq,
              tau_sq, phi):
        """Broadcasts scalar-prior entries across the N_t time steps."""
        m0 = np.asarray(m0, dtype=np.float64)
        sigma0 = np.asarray(sigma0, dtype=np.float64)
        scale = np.asarray(sigma_eta_scale, dtype=np.float64)
        p = m0.shape[0]
        if sigma0.shape != (p, p) or scale.shape != (p, p):
            raise DimensionMismatch("sigma0 and sigma_eta_scale must be p x p")
        if not sigma_eta_df > p - 1:
            raise InvalidParam("inverse-Wishart df must exceed p - 1")
        chol(sigma0)  # SPD check
        chol(scale)
        sigma_sq = _per_step(sigma_sq, nt, "sigma_sq priors")
        tau_sq = _per_step(tau_sq, nt, "tau_sq priors")
        phi = _per_step(phi, nt, "phi priors")
        for pr in sigma_sq + tau_sq:
            if pr.kind != "inverse-gamma":
                raise InvalidParam("variance priors must be inverse-gamma")
        for pr in phi:
            if pr.kind != "uniform":
                raise InvalidParam("decay priors must be uniform")
        return cls(m0, sigma0, float(sigma_eta_df), scale, tuple(sigma_sq),
                   tuple(tau_sq), tuple(phi))


@dataclass(frozen=True)
class DynamicStarting:
    """Starting values; scalars broadcast across time steps."""

    beta: np.ndarray  # (nt, p)
    sigma_sq: np.ndarray
    tau_sq: np.ndarray
    phi: np.ndarray
    sigma_eta: np.ndarray  # (p, p)

    @classmethod
    def build(cls, nt, p, beta, sigma_sq, tau_sq, phi, sigma_eta):
        beta = np.asarray(beta, dtype=np.float64)
        if beta.ndim == 1:
            beta = np.tile(beta, (nt, 1))
        if beta.shape != (nt, p):
            raise DimensionMismatch(f"beta start must be (N_t, p), got {beta.shape}")
        to_vec = lambda v: np.full(nt, v, dtype=np.float64) if np.isscalar(v) \
            else np.asarray(v, dtype=np.float64)
        sigma_sq = to_vec(sigma_sq)
        tau_sq = to_vec(tau_sq)
        phi = to_vec(phi)
        for name, vec in (("sigma_sq", sigma_sq), ("tau_sq", tau_sq), ("phi", phi)):
            if vec.shape != (nt,):
                raise DimensionMismatch(f"{name} start must have one value per step")
            if not (vec > 0).all():
                raise InvalidParam(f"{name} starts must be positive")
        sigma_eta = np.asarray(sigma_eta, dtype=np.float64)
        if sigma_eta.shape != (p, p):
            raise DimensionMismatch("sigma_eta start must be p x p")
        return cls(beta, sigma_sq, tau_sq, phi, sigma_eta)


def impute_missing(x_t, beta_t, u_t, missing_rows, tau_sq_t, rng):
    """Posterior-predictive draws for the missing cells of one time step."""
    if missing_rows.size == 0:
        return np.empty(0)
    mean = x_t[missing_rows] @ beta_t + u_t[missing_rows]
    return mean + math.sqrt(tau_sq_t) * rng.standard_normal(missing_rows.size)


def draw_inv_wishart(df, scale, rng):
    """(Sigma, Sigma^{-1}) drawn from IW(df, scale) via Bartlett.

    The precision ``Sigma^{-1}`` follows Wishart(df, scale^{-1}); both
    matrices come from triangular factors, no dense inversion.
    """
    p = scale.shape[0]
    l_s = chol(scale, check_symmetry=False)
    a = np.zeros((p, p))
    for i in range(p):
        a[i, i] = math.sqrt(rng.chisquare(df - i))
        for j in range(i):
            a[i, j] = rng.standard_normal()
    # precision factor F = L_S^{-T} A
    f = trsolve(l_s, a, side="upper")
    prec = f @ f.T
    # Sigma = (L_S A^{-T}) (L_S A^{-T})'
    a_inv_t = trsolve(CholFactor(a), np.eye(p), side="upper")
    g = l_s.lower @ a_inv_t
    return g @ g.T, prec


def beta_conditional_factors(x_t, y_t, u_t, tau_sq_t, sigma_eta_inv,
                             prev_beta, next_beta):
    """(precision, rhs) of one beta_t full conditional given its neighbors."""
    prec = x_t.T @ x_t / tau_sq_t + sigma_eta_inv * (2 if next_beta is not None else 1)
    rhs = x_t.T @ (y_t - u_t) / tau_sq_t + sigma_eta_inv @ (
        prev_beta + (next_beta if next_beta is not None else 0.0)
    )
    return prec, rhs


def u_conditional_factors(y_t, x_t, beta_t, tau_sq_t, c_inv_t, u_prev,
                          c_inv_next=None, u_next=None):
    """(precision, rhs) of one u_t full conditional given its neighbors."""
    n = y_t.shape[0]
    prec = c_inv_t.copy()
    prec.flat[:: n + 1] += 1.0 / tau_sq_t
    rhs = (y_t - x_t @ beta_t) / tau_sq_t + c_inv_t @ u_prev
    if c_inv_next is not None:
        prec += c_inv_next
        rhs += c_inv_next @ u_next
    return prec, rhs


@dataclass
class DynamicFit:
    """Posterior samples from the dynamic model; arrays indexed by
    (iteration, time step, ...)."""

    data: DynamicDataset
    family: object
    priors: DynamicPriors
    options: object
    beta0: np.ndarray  # (M, p)
    beta: np.ndarray  # (M, nt, p)
    u: np.ndarray  # (M, nt, n)
    sigma_sq: np.ndarray  # (M, nt)
    tau_sq: np.ndarray  # (M, nt)
    phi: np.ndarray  # (M, nt)
    sigma_eta: np.ndarray  # (M, p, p)
    y_rep: np.ndarray | None  # (M, n, nt) fitted/imputed draws
    u0: np.ndarray
    accept_rate: float
    accept_rate_by_step: np.ndarray


def _phi_param(prior, start, tuning):
    return ThetaParam("phi", prior, float(start), float(tuning))


def fit_dynamic(data, family, priors, starting, tuning_phi, options,
                progress=None, nu=None, get_fitted=True):
    """Run the dynamic-model Gibbs sampler.

    ``tuning_phi`` holds per-step Metropolis scales for the decay updates
    (scalar broadcasts).  ``nu`` fixes the Matern smoothness when that
    family is chosen (the dynamic model does not sample it).  With
    ``get_fitted`` the fitted/imputed outcome draws are stored; missing
    cells always carry posterior-predictive draws there.
    """
    n, nt, p = data.n, data.n_steps, data.p
    if family.needs_nu and nu is None:
        raise InvalidParam("matern dynamic fits need a fixed smoothness nu")
    rng = np.random.default_rng(options.seed)
    dist = pairwise_distances(data.coords, data.coords)
    mask = data.missing_mask
    missing_rows = [np.flatnonzero(mask[:, t]) for t in range(nt)]

    tuning_vec = np.full(nt, tuning_phi, dtype=np.float64) \
        if np.isscalar(tuning_phi) else np.asarray(tuning_phi, dtype=np.float64)
    if tuning_vec.shape != (nt,):
        raise DimensionMismatch("phi tuning must have one value per step")
    phi_params = [
        _phi_param(priors.phi[t], starting.phi[t], tuning_vec[t])
        for t in range(nt)
    ]

    # state
    y_work = data.y.copy()
    y_work[mask] = 0.0
    beta0 = priors.m0.copy()
    beta = starting.beta.copy()
    u0 = np.zeros(n)
    u = np.zeros((nt, n))
    sigma_sq = starting.sigma_sq.copy()
    tau_sq = starting.tau_sq.copy()
    phi = starting.phi.copy()
    sigma_eta = starting.sigma_eta.copy()
    sigma_eta_inv = solve_spd_from_chol(chol(sigma_eta), np.eye(p))
    sigma0_inv = solve_spd_from_chol(chol(priors.sigma0), np.eye(p))
    sigma0_inv_m0 = sigma0_inv @ priors.m0

    def corr_chol(phi_t):
        r_mat = corr_from_dist(dist, family, phi_t, nu)
        return chol(r_mat, check_symmetry=False), r_mat

    r_chol = [None] * nt
    r_inv = [None] * nt
    for t in range(nt):
        fac, _ = corr_chol(phi[t])
        r_chol[t] = fac
        r_inv[t] = solve_spd_from_chol(fac, np.eye(n))

    m = options.n_samples
    out_beta0 = np.empty((m, p))
    out_beta = np.empty((m, nt, p))
    out_u = np.empty((m, nt, n))
    out_sigma_sq = np.empty((m, nt))
    out_tau_sq = np.empty((m, nt))
    out_phi = np.empty((m, nt))
    out_sigma_eta = np.empty((m, p, p))
    out_y_rep = np.empty((m, n, nt)) if get_fitted else None

    trackers = [AcceptanceTracker() for _ in range(nt)]
    adapt = (
        AdaptiveScales(tuning_vec, options.adapt_batch, options.adapt_target)
        if options.adaptive
        else None
    )

    if progress is not None:
        for line in dynamic_banner_lines(n, nt, data.n_missing, p, family,
                                         options.n_samples, priors):
            progress(line)
        for line in sampling_header():
            progress(line)
    reporter = ProgressReporter(progress, m, options.report_interval,
                                mean_rates=True)

    def phi_target_with_factor(z_t, t, w_t, fac):
        s = trsolve(fac, w_t)
        half_logdet = float(np.sum(np.log(np.diag(fac.lower))))
        lp = -half_logdet - 0.5 * float(s @ s) / sigma_sq[t]
        return lp + phi_params[t].log_prior_with_jacobian(z_t)

    def phi_log_target(z_t, t, w_t):
        phi_val = phi_params[t].inverse_transform(z_t)
        r_mat = corr_from_dist(dist, family, phi_val, nu)
        fac = chol(r_mat, check_symmetry=False)
        return phi_target_with_factor(z_t, t, w_t, fac), fac

    z_phi = np.array([phi_params[t].transform(phi[t]) for t in range(nt)])

    for it in range(m):
        try:
            # (1) impute missing outcomes so the scan sees complete data
            for t in range(nt):
                rows = missing_rows[t]
                if rows.size:
                    y_work[rows, t] = impute_missing(
                        data.x[t], beta[t], u[t], rows, tau_sq[t], rng
                    )

            # (2) beta_0 and beta_t sweeps in time order
            prec = sigma0_inv + sigma_eta_inv
            rhs = sigma0_inv_m0 + sigma_eta_inv @ beta[0]
            beta0 = draw_beta(rhs, chol(prec, check_symmetry=False),
                              rng.standard_normal(p))
            for t in range(nt):
                prev_b = beta0 if t == 0 else beta[t - 1]
                next_b = beta[t + 1] if t < nt - 1 else None
                prec, rhs = beta_conditional_factors(
                    data.x[t], y_work[:, t], u[t], tau_sq[t], sigma_eta_inv,
                    prev_b, next_b,
                )
                beta[t] = draw_beta(rhs, chol(prec, check_symmetry=False),
                                    rng.standard_normal(p))

            # (3) u_t sweeps in time order (u_0 = 0 never changes)
            for t in range(nt):
                u_prev = u0 if t == 0 else u[t - 1]
                c_inv_t = r_inv[t] / sigma_sq[t]
                if t < nt - 1:
                    c_inv_next = r_inv[t + 1] / sigma_sq[t + 1]
                    prec, rhs = u_conditional_factors(
                        y_work[:, t], data.x[t], beta[t], tau_sq[t], c_inv_t,
                        u_prev, c_inv_next, u[t + 1],
                    )
                else:
                    prec, rhs = u_conditional_factors(
                        y_work[:, t], data.x[t], beta[t], tau_sq[t], c_inv_t,
                        u_prev,
                    )
                u[t] = draw_beta(rhs, chol(prec, check_symmetry=False),
                                 rng.standard_normal(n))

            # (4) Sigma_eta from its conjugate inverse-Wishart conditional
            diffs = np.diff(np.vstack([beta0[None, :], beta]), axis=0)
            scale_n = priors.sigma_eta_scale + diffs.T @ diffs
            sigma_eta, sigma_eta_inv = draw_inv_wishart(
                priors.sigma_eta_df + nt, scale_n, rng
            )

            # (5) conjugate inverse-gamma variance updates
            for t in range(nt):
                u_prev = u0 if t == 0 else u[t - 1]
                w_t = u[t] - u_prev
                s = trsolve(r_chol[t], w_t)
                pr = priors.sigma_sq[t]
                sigma_sq[t] = 1.0 / rng.gamma(pr.a + 0.5 * n,
                                              1.0 / (pr.b + 0.5 * float(s @ s)))
                resid = y_work[:, t] - data.x[t] @ beta[t] - u[t]
                pr = priors.tau_sq[t]
                tau_sq[t] = 1.0 / rng.gamma(
                    pr.a + 0.5 * n, 1.0 / (pr.b + 0.5 * float(resid @ resid))
                )

            # (6) per-step Metropolis update of the decay parameters
            scales = adapt.scales if adapt is not None else tuning_vec
            accept_mask = np.zeros(nt, dtype=bool)
            for t in range(nt):
                u_prev = u0 if t == 0 else u[t - 1]
                w_t = u[t] - u_prev
                lp_cur = phi_target_with_factor(z_phi[t], t, w_t, r_chol[t])
                z_prop = z_phi[t] + scales[t] * rng.standard_normal()
                try:
                    lp_prop, fac_prop = phi_log_target(z_prop, t, w_t)
                except NotPositiveDefinite as err:
                    logger.warning("rejecting phi proposal at t=%d: %s", t + 1, err)
                    lp_prop, fac_prop = -math.inf, None
                if math.log(rng.random()) < lp_prop - lp_cur:
                    z_phi[t] = z_prop
                    phi[t] = phi_params[t].inverse_transform(z_prop)
                    r_chol[t] = fac_prop
                    r_inv[t] = solve_spd_from_chol(fac_prop, np.eye(n))
                    accept_mask[t] = True
                trackers[t].record(accept_mask[t])
            if adapt is not None:
                adapt.record(accept_mask)
        except NotPositiveDefinite as err:
            raise NotPositiveDefinite(
                f"factorization failed at iteration {it + 1}: {err}",
                pivot=err.pivot,
            ) from err

        out_beta0[it] = beta0
        out_beta[it] = beta
        out_u[it] = u
        out_sigma_sq[it] = sigma_sq
        out_tau_sq[it] = tau_sq
        out_phi[it] = phi
        out_sigma_eta[it] = sigma_eta
        if get_fitted:
            fitted = np.empty((n, nt))
            for t in range(nt):
                mean = data.x[t] @ beta[t] + u[t]
                fitted[:, t] = mean + math.sqrt(tau_sq[t]) * rng.standard_normal(n)
                rows = missing_rows[t]
                if rows.size:
                    fitted[rows, t] = y_work[rows, t]
            out_y_rep[it] = fitted

        if reporter.due(it + 1):
            interval = float(np.mean([tr.take_interval_rate() for tr in trackers]))
            overall = float(np.mean([tr.overall_rate for tr in trackers]))
            reporter.report(it + 1, interval, overall)

    overall_rates = np.array([tr.overall_rate for tr in trackers])
    return DynamicFit(
        data=data,
        family=family,
        priors=priors,
        options=options,
        beta0=out_beta0,
        beta=out_beta,
        u=out_u,
        sigma_sq=out_sigma_sq,
        tau_sq=out_tau_sq,
        phi=out_phi,
        sigma_eta=out_sigma_eta,
        y_rep=out_y_rep,
        u0=u0,
        accept_rate=float(overall_rates.mean()),
        accept_rate_by_step=overall_rates,
    )
