"""Declarative model description: data containers, priors, parameter
transforms with Jacobians, starting/tuning values, and knot construction.

Process parameters are sampled on an unconstrained scale: log for
inverse-gamma-priored positives, logit of ``(x - a)/(b - a)`` for
uniform-priored parameters.  ``log_prior_with_jacobian`` is the quantity a
Metropolis step on the transformed scale adds to the marginal
log-likelihood.  All value types here are immutable after construction and
safe to share between threads.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .covariance import CovFamily, ProcessParams, as_coords
from .errors import (
    DimensionMismatch,
    InvalidParam,
    MissingNotAllowed,
    NotPositiveDefinite,
    OutOfSupport,
    RankDeficientX,
    TooManyKnots,
)
from .linalg import chol

__all__ = [
    "THETA_ORDER",
    "SpatialDataset",
    "BetaPrior",
    "ScalarPrior",
    "ThetaParam",
    "ThetaSpec",
    "SamplerOptions",
    "KnotSpec",
    "build_knots",
]

# canonical ordering of sampled process parameters (matches output headers)
THETA_ORDER = ("sigma_sq", "tau_sq", "phi", "nu")
THETA_HEADERS = {
    "sigma_sq": "sigma.sq",
    "tau_sq": "tau.sq",
    "phi": "phi",
    "nu": "nu",
}


@dataclass(frozen=True)
class SpatialDataset:
    """Coordinates, outcome and design matrix for one spatial fit.

    The design matrix carries an explicit intercept column when the model
    has one.  Requires n > p >= 1, no missing values, and X of full column
    rank (checked through a Cholesky factorization of X'X).
    """

    coords: np.ndarray
    y: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        coords = as_coords(self.coords)
        y = np.asarray(self.y, dtype=np.float64)
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim != 2:
            raise DimensionMismatch("design matrix must be 2-d")
        n, p = x.shape
        if y.shape != (n,) or coords.shape[0] != n:
            raise DimensionMismatch(
                f"inconsistent sizes: coords {coords.shape[0]}, y {y.shape}, x {x.shape}"
            )
        if not (n > p >= 1):
            raise DimensionMismatch(f"need n > p >= 1, got n={n}, p={p}")
        if not np.isfinite(y).all() or not np.isfinite(x).all():
            raise MissingNotAllowed("y and x must be fully observed and finite")
        try:
            chol(x.T @ x, check_symmetry=False)
        except NotPositiveDefinite as err:
            raise RankDeficientX("design matrix is rank deficient") from err
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def p(self):
        return self.x.shape[1]


class BetaPrior:
    """Prior on the slopes: flat or N(mu_beta, sigma_beta)."""

    def __init__(self, kind, mu_beta=None, sigma_beta=None):
        if kind not in ("flat", "normal"):
            raise InvalidParam(f"beta prior kind must be flat|normal, got {kind!r}")
        self.kind = kind
        if kind == "flat":
            if mu_beta is not None or sigma_beta is not None:
                raise InvalidParam("flat beta prior takes no hyperparameters")
            self.mu_beta = None
            self.sigma_beta = None
            return
        mu = np.asarray(mu_beta, dtype=np.float64)
        sig = np.asarray(sigma_beta, dtype=np.float64)
        if mu.ndim != 1 or sig.shape != (mu.shape[0], mu.shape[0]):
            raise DimensionMismatch("normal beta prior needs a p-vector and p x p matrix")
        try:
            self._sigma_chol = chol(sig)
        except NotPositiveDefinite as err:
            raise InvalidParam("sigma_beta must be SPD") from err
        self.mu_beta = mu
        self.sigma_beta = sig

    @classmethod
    def flat(cls):
        return cls("flat")

    @classmethod
    def normal(cls, mu_beta, sigma_beta):
        return cls("normal", mu_beta, sigma_beta)

    @property
    def is_flat(self):
        return self.kind == "flat"

    def sigma_chol(self):
        return self._sigma_chol


@dataclass(frozen=True)
class ScalarPrior:
    """Proper scalar prior: inverse-gamma(shape, scale) or uniform(a, b)."""

    kind: str
    a: float
    b: float

    def __post_init__(self):
        if self.kind == "inverse-gamma":
            if not (self.a > 0.0 and self.b > 0.0):
                raise InvalidParam("inverse-gamma needs shape > 0 and scale > 0")
        elif self.kind == "uniform":
            if not self.a < self.b:
                raise InvalidParam("uniform needs a < b")
        else:
            raise InvalidParam(f"unknown prior kind {self.kind!r}")

    @classmethod
    def inverse_gamma(cls, shape, scale):
        return cls("inverse-gamma", shape, scale)

    @classmethod
    def uniform(cls, a, b):
        return cls("uniform", a, b)

    def in_support(self, x):
        if self.kind == "inverse-gamma":
            return x > 0.0
        return self.a < x < self.b

    def log_density(self, x):
        """Log density at x (inside the support)."""
        if self.kind == "inverse-gamma":
            a, b = self.a, self.b
            return a * math.log(b) - math.lgamma(a) - (a + 1.0) * math.log(x) - b / x
        return -math.log(self.b - self.a)

    def cdf(self, x):
        if self.kind == "uniform":
            return float(np.clip((x - self.a) / (self.b - self.a), 0.0, 1.0))
        # regularized upper incomplete gamma of (shape, scale/x)
        from scipy.special import gammaincc

        if x <= 0.0:
            return 0.0
        return float(gammaincc(self.a, self.b / x))


@dataclass(frozen=True)
class ThetaParam:
    name: str
    prior: ScalarPrior
    start: float
    tuning_sd: float

    def __post_init__(self):
        if self.name not in THETA_ORDER:
            raise InvalidParam(f"unknown theta parameter {self.name!r}")
        if self.name == "tau_sq" and self.prior.kind == "uniform":
            # a uniform prior would admit tau^2 -> 0 boundary singularities
            raise InvalidParam("tau_sq requires an inverse-gamma prior")
        if not self.prior.in_support(self.start):
            raise OutOfSupport(
                f"start {self.start} outside the {self.name} prior support"
            )
        if not self.tuning_sd > 0.0:
            raise InvalidParam("tuning_sd must be > 0")

    def transform(self, x):
        """Map a support point to the unconstrained sampling scale."""
        if not self.prior.in_support(x):
            raise OutOfSupport(f"{self.name}={x} outside the prior support")
        if self.prior.kind == "inverse-gamma":
            return math.log(x)
        u = (x - self.prior.a) / (self.prior.b - self.prior.a)
        return math.log(u / (1.0 - u))

    def inverse_transform(self, z):
        if self.prior.kind == "inverse-gamma":
            return math.exp(z)
        # stable logistic
        if z >= 0.0:
            u = 1.0 / (1.0 + math.exp(-z))
        else:
            e = math.exp(z)
            u = e / (1.0 + e)
        return self.prior.a + (self.prior.b - self.prior.a) * u

    def log_prior_with_jacobian(self, z):
        """Log prior at the back-transformed value plus log |d x / d z|."""
        x = self.inverse_transform(z)
        lp = self.prior.log_density(x)
        if self.prior.kind == "inverse-gamma":
            return lp + z
        # log(b-a) + z - 2 log(1+e^z), written overflow-safe
        width = self.prior.b - self.prior.a
        return lp + math.log(width) - abs(z) - 2.0 * math.log1p(math.exp(-abs(z)))


class ThetaSpec:
    """Ordered collection of sampled process parameters."""

    def __init__(self, params):
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            raise InvalidParam("duplicate theta parameter names")
        order = {n: i for i, n in enumerate(THETA_ORDER)}
        self.params = tuple(sorted(params, key=lambda p: order[p.name]))
        self.names = tuple(p.name for p in self.params)

    @classmethod
    def for_family(cls, family, priors, starting, tuning):
        """Build a spec from name-keyed dicts, validating family consistency."""
        wanted = ["sigma_sq", "tau_sq", "phi"] + (["nu"] if family.needs_nu else [])
        missing = [n for n in wanted if n not in priors]
        if missing:
            raise InvalidParam(f"missing priors for {missing}")
        extra = set(priors) - set(wanted)
        if extra:
            raise InvalidParam(f"priors given for parameters not in the model: {sorted(extra)}")
        params = []
        for name in wanted:
            if name not in starting or name not in tuning:
                raise InvalidParam(f"missing starting or tuning value for {name}")
            params.append(
                ThetaParam(name, priors[name], float(starting[name]), float(tuning[name]))
            )
        return cls(params)

    def __len__(self):
        return len(self.params)

    def __iter__(self):
        return iter(self.params)

    def headers(self):
        return [THETA_HEADERS[n] for n in self.names]

    def start_vector(self):
        return np.array([p.start for p in self.params])

    def tuning_vector(self):
        return np.array([p.tuning_sd for p in self.params])

    def transform(self, values):
        values = np.asarray(values, dtype=np.float64)
        return np.array([p.transform(v) for p, v in zip(self.params, values)])

    def inverse_transform(self, z):
        return np.array([p.inverse_transform(zi) for p, zi in zip(self.params, z)])

    def log_prior_with_jacobian(self, z):
        return float(sum(p.log_prior_with_jacobian(zi) for p, zi in zip(self.params, z)))

    def log_prior_constrained(self, values):
        """Log prior density at constrained values (no Jacobian)."""
        total = 0.0
        for p, v in zip(self.params, values):
            if not p.prior.in_support(v):
                raise OutOfSupport(f"{p.name}={v} outside the prior support")
            total += p.prior.log_density(v)
        return total

    def to_process_params(self, values):
        d = dict(zip(self.names, values))
        return ProcessParams(
            sigma_sq=d["sigma_sq"],
            phi=d["phi"],
            tau_sq=d["tau_sq"],
            nu=d.get("nu"),
        )


@dataclass(frozen=True)
class SamplerOptions:
    """MCMC run options shared by every fitting routine."""

    n_samples: int
    report_interval: int = 0  # 0: no progress reports
    adaptive: bool = False
    adapt_batch: int = 25
    adapt_target: float = 0.44
    seed: int = 0
    burn_in_fraction: float = 0.75
    thin: int = 1

    def __post_init__(self):
        if self.n_samples < 1:
            raise InvalidParam("n_samples must be >= 1")
        if not 0.0 < self.adapt_target < 1.0:
            raise InvalidParam("adapt_target must be in (0, 1)")
        if not 0.0 <= self.burn_in_fraction < 1.0:
            raise InvalidParam("burn_in_fraction must be in [0, 1)")
        if self.thin < 1 or self.adapt_batch < 1 or self.report_interval < 0:
            raise InvalidParam("counts must be positive")

    @property
    def burn_in(self):
        return int(math.floor(self.burn_in_fraction * self.n_samples))


@dataclass(frozen=True)
class KnotSpec:
    """Knot layout: a grid over the data extent or explicit locations."""

    kind: str
    nx: int = 0
    ny: int = 0
    extend: float = 0.0
    points: np.ndarray | None = None
    modified: bool = False

    @classmethod
    def grid(cls, nx, ny, extend=0.0, modified=False):
        if nx < 1 or ny < 1:
            raise InvalidParam("grid dimensions must be >= 1")
        if extend < 0.0:
            raise InvalidParam("grid extend fraction must be >= 0")
        return cls("grid", nx=nx, ny=ny, extend=extend, modified=modified)

    @classmethod
    def explicit(cls, points, modified=False):
        return cls("explicit", points=as_coords(points), modified=modified)


def build_knots(spec, data_coords):
    """Knot coordinates for a fit; grids span the (extended) data extent."""
    data_coords = as_coords(data_coords)
    n = data_coords.shape[0]
    if spec.kind == "explicit":
        knots = spec.points
    else:
        lo = data_coords.min(axis=0)
        hi = data_coords.max(axis=0)
        span = hi - lo
        lo = lo - spec.extend * span
        hi = hi + spec.extend * span
        gx = np.linspace(lo[0], hi[0], spec.nx) if spec.nx > 1 else np.array([0.5 * (lo[0] + hi[0])])
        gy = np.linspace(lo[1], hi[1], spec.ny) if spec.ny > 1 else np.array([0.5 * (lo[1] + hi[1])])
        xx, yy = np.meshgrid(gx, gy, indexing="ij")
        knots = np.column_stack([xx.ravel(), yy.ravel()])
    if knots.shape[0] >= n:
        raise TooManyKnots(
            f"{knots.shape[0]} knots for {n} observations; need r < n"
        )
    return knots
