"""Spatial correlation families and covariance-matrix construction.

Coordinate sets are plain ``(n, 2)`` float arrays in the user's (projected)
units; distances are always Euclidean.  Correlation families:

==================== ==========================================m
exponential          exp(-phi d)
powered-exponential  exp(-phi d^alpha), alpha in (0, 2]
gaussian             exp(-phi d^2)  (powered-exponential at alpha=2)
spherical            1 - 1.5 phi d + 0.5 (phi d)^3 for d < 1/phi, else 0
matern               (phi d)^nu K_nu(phi d) / (2^(nu-1) Gamma(nu))
==================== ==========================================

The Matern entrywise kernel is dispatched to :mod:`geomc.kernels` (compiled
when available); the other families are vectorized numpy expressions.  The
samplers cache distance matrices once per fit and rebuild covariance values
entrywise via :func:`cov_from_dist` on every parameter update.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from . import kernels
from .errors import DimensionMismatch, InvalidParam

__all__ = [
    "FAMILY_KINDS",
    "CovFamily",
    "ProcessParams",
    "as_coords",
    "pairwise_distances",
    "correlation",
    "corr_from_dist",
    "cov_from_dist",
    "cov_matrix",
    "cross_cov",
    "effective_range_to_phi",
]

FAMILY_KINDS = (
    "exponential",
    "powered-exponential",
    "gaussian",
    "spherical",
    "matern",
)


@dataclass(frozen=True)
class CovFamily:
    """Correlation family; ``power`` is the fixed powered-exponential exponent."""

    kind: str
    power: float | None = None

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise InvalidParam(f"unknown correlation family {self.kind!r}")
        if self.kind == "powered-exponential":
            if self.power is None or not 0.0 < self.power <= 2.0:
                raise InvalidParam(
                    "powered-exponential needs an exponent in (0, 2]"
                )
        elif self.power is not None:
            raise InvalidParam(f"{self.kind} takes no exponent")

    @property
    def needs_nu(self):
        return self.kind == "matern"


@dataclass(frozen=True)
class ProcessParams:
    """Process parameters theta = (sigma_sq, phi, tau_sq[, nu])."""

    sigma_sq: float
    phi: float
    tau_sq: float
    nu: float | None = None

    def __post_init__(self):
        if not self.sigma_sq > 0.0:
            raise InvalidParam(f"sigma_sq must be > 0, got {self.sigma_sq}")
        if not self.phi > 0.0:
            raise InvalidParam(f"phi must be > 0, got {self.phi}")
        if not self.tau_sq >= 0.0:
            raise InvalidParam(f"tau_sq must be >= 0, got {self.tau_sq}")
        if self.nu is not None and not self.nu > 0.0:
            raise InvalidParam(f"nu must be > 0, got {self.nu}")

    def require_nu_for(self, family):
        if family.needs_nu and self.nu is None:
            raise InvalidParam("matern family needs a smoothness nu")


def as_coords(points):
    """Validate and return an ``(n, 2)`` float64 coordinate array."""
    pts = np.ascontiguousarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DimensionMismatch(f"coordinates must be (n, 2), got {pts.shape}")
    if pts.shape[0] < 1:
        raise DimensionMismatch("coordinate set must be nonempty")
    if not np.isfinite(pts).all():
        raise InvalidParam("coordinates must be finite")
    return pts


def pairwise_distances(a, b):
    """Euclidean distance matrix between two coordinate sets.

    Symmetric with an exactly zero diagonal when ``a`` and ``b`` are the
    same array.
    """
    a = as_coords(a)
    b = as_coords(b)
    return cdist(a, b)


def _check_corr_params(family, phi, nu):
    if not phi > 0.0:
        raise InvalidParam(f"phi must be > 0, got {phi}")
    if family.needs_nu:
        if nu is None or not nu > 0.0:
            raise InvalidParam(f"matern needs nu > 0, got {nu}")


def corr_from_dist(dist, family, phi, nu=None, out=None):
    """Entrywise correlation of a distance array (any shape)."""
    _check_corr_params(family, phi, nu)
    dist = np.asarray(dist, dtype=np.float64)
    if out is None:
        out = np.empty_like(dist)
    kind = family.kind
    if kind == "exponential":
        np.multiply(dist, -phi, out=out)
        np.exp(out, out=out)
    elif kind == "gaussian":
        np.square(dist, out=out)
        out *= -phi
        np.exp(out, out=out)
    elif kind == "powered-exponential":
        np.power(dist, family.power, out=out)
        out *= -phi
        np.exp(out, out=out)
    elif kind == "spherical":
        # clipping at t=1 makes the tail exactly zero: 1 - 1.5 + 0.5 = 0
        np.multiply(dist, phi, out=out)
        np.minimum(out, 1.0, out=out)
        t = out.copy()
        out *= t * t
        out *= 0.5
        out -= 1.5 * t
        out += 1.0
    else:  # matern
        flat_d = np.ascontiguousarray(dist).reshape(-1)
        flat_o = np.empty_like(flat_d)
        kernels.matern_fill(flat_d, flat_o, phi, nu, 1.0)
        out[...] = flat_o.reshape(dist.shape)
    return out


def correlation(d, family, phi, nu=None):
    """Scalar correlation at separation ``d`` (>= 0); lies in [0, 1]."""
    if d < 0.0:
        raise InvalidParam(f"distance must be >= 0, got {d}")
    _check_corr_params(family, phi, nu)
    if family.kind == "matern":
        return kernels.matern_corr(d * phi, nu)
    return float(corr_from_dist(np.array([d]), family, phi, nu)[0])


def cov_from_dist(dist, family, params, include_nugget=False, out=None):
    """sigma^2 * rho(dist) with tau^2 added on the diagonal when requested."""
    params.require_nu_for(family)
    out = corr_from_dist(dist, family, params.phi, params.nu, out=out)
    out *= params.sigma_sq
    if include_nugget:
        n, m = out.shape
        if n != m:
            raise DimensionMismatch("nugget needs a square covariance")
        out.flat[:: n + 1] += params.tau_sq
    return out


def cov_matrix(coords, family, params, include_nugget=False):
    """Covariance matrix of the process over one coordinate set.

    SPD for distinct coordinates; with ``include_nugget`` and tau^2 > 0 it is
    SPD for any coordinate multiset.  Coincident coordinates without a nugget
    only surface as a factorization failure downstream.
    """
    coords = as_coords(coords)
    dist = pairwise_distances(coords, coords)
    return cov_from_dist(dist, family, params, include_nugget=include_nugget)


def cross_cov(a, b, family, params):
    """Rectangular |a| x |b| cross-covariance (never includes the nugget)."""
    dist = pairwise_distances(a, b)
    return cov_from_dist(dist, family, params, include_nugget=False)


def effective_range_to_phi(range_):
    """Decay phi with correlation 0.05 at ``range_`` (exponential family)."""
    if not range_ > 0.0:
        raise InvalidParam(f"effective range must be > 0, got {range_}")
    return -np.log(0.05) / range_
