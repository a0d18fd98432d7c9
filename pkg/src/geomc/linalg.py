"""Dense SPD linear-algebra kernels used by every sampler.

The whole package works in terms of Cholesky factors and triangular solves;
no operation here (or anywhere else) materializes a matrix inverse through a
dedicated inverse routine.  Matrices are ``float64`` numpy arrays kept in
column-major (Fortran) order so the LAPACK factorization and solve routines
run without copies.  Multiplications with diagonal matrices are expressed as
elementwise row/column scalings by the callers.

All functions are pure except :func:`mvn_draw`, which advances only the
generator passed to it; values returned here can be shared read-only across
threads.
"""

import numpy as np
from scipy.linalg import lapack

from .errors import (
    AsymmetricMatrix,
    DimensionMismatch,
    NotPositiveDefinite,
    SingularTriangular,
)

__all__ = [
    "CholFactor",
    "chol",
    "trsolve",
    "log_det_from_chol",
    "mvn_draw",
    "mvn_from_noise",
    "solve_spd_from_chol",
]

DEFAULT_SYMMETRY_TOL = 1e-8


class CholFactor:
    """Lower-triangular Cholesky factor with a strictly positive diagonal."""

    __slots__ = ("lower",)

    def __init__(self, lower):
        self.lower = lower

    @property
    def n(self):
        return self.lower.shape[0]

    def __repr__(self):
        return f"CholFactor(n={self.n})"


def _as_matrix(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionMismatch(f"expected a matrix, got ndim={a.ndim}")
    return a


def chol(a, *, symmetry_tol=DEFAULT_SYMMETRY_TOL, check_symmetry=True,
         jitter=0.0, overwrite_a=False, clean=True):
    """Lower-triangular Cholesky factor of a symmetric positive-definite matrix.

    Parameters
    ----------
    a : (n, n) array_like
        Symmetric positive-definite matrix.
    symmetry_tol : float
        Accept ``a`` when ``max|a - a.T| <= symmetry_tol * max|a|``.
    check_symmetry : bool
        Skip the O(n^2) symmetry scan when the caller builds ``a``
        symmetric by construction (hot sampler loops do).
    jitter : float
        Explicit diagonal ridge added before factorizing.  Never applied
        silently; the default 0.0 leaves ``a`` untouched.
    overwrite_a : bool
        Allow LAPACK to factorize in place when ``a`` is Fortran-ordered.
    clean : bool
        Zero the upper triangle of the factor.  Hot sampler loops that only
        run triangular solves against the factor may skip the O(n^2) fill;
        such factors must not be used where the strict lower-triangular
        invariant matters (matrix products with the factor).

    Raises
    ------
    NotPositiveDefinite
        A pivot <= 0 was encountered; ``pivot`` holds its 0-based index.
    """
    a = _as_matrix(a)
    n, m = a.shape
    if n != m:
        raise DimensionMismatch(f"chol needs a square matrix, got {n}x{m}")
    if n == 0:
        raise DimensionMismatch("chol needs a nonempty matrix")
    if check_symmetry:
        scale = np.abs(a).max()
        if scale > 0 and np.abs(a - a.T).max() > symmetry_tol * scale:
            raise AsymmetricMatrix("matrix exceeds the symmetry tolerance")
    if jitter:
        a = a.copy(order="F")
        a.flat[:: n + 1] += jitter
        overwrite_a = True
    elif not a.flags.f_contiguous:
        a = np.asfortranarray(a)
        overwrite_a = True
    c, info = lapack.dpotrf(a, lower=1, clean=1 if clean else 0,
                            overwrite_a=overwrite_a)
    if info > 0:
        raise NotPositiveDefinite(
            f"matrix is not positive definite (pivot {info - 1})",
            pivot=info - 1,
        )
    if info < 0:
        raise ValueError(f"dpotrf: illegal argument {-info}")
    return CholFactor(c)


def _factor_matrix(l):
    if isinstance(l, CholFactor):
        return l.lower
    m = _as_matrix(l)
    if m.shape[0] != m.shape[1]:
        raise DimensionMismatch("triangular factor must be square")
    return m


def trsolve(l, rhs, side="lower"):
    """Solve ``L x = rhs`` (side="lower") or ``L' x = rhs`` (side="upper").

    ``l`` is a :class:`CholFactor` or a lower-triangular matrix; ``rhs`` may be
    a vector or a matrix of right-hand sides.  Raises
    :class:`SingularTriangular` on a zero diagonal entry.
    """
    m = _factor_matrix(l)
    b = np.asarray(rhs, dtype=np.float64)
    vector = b.ndim == 1
    if b.ndim not in (1, 2):
        raise DimensionMismatch(f"rhs must be a vector or matrix, ndim={b.ndim}")
    if b.shape[0] != m.shape[0]:
        raise DimensionMismatch(
            f"rhs has {b.shape[0]} rows, factor dimension is {m.shape[0]}"
        )
    if side == "lower":
        trans = 0
    elif side == "upper":
        trans = 1
    else:
        raise ValueError(f"side must be 'lower' or 'upper', got {side!r}")
    x, info = lapack.dtrtrs(m, b, lower=1, trans=trans)
    if info > 0:
        raise SingularTriangular(
            f"triangular factor has zero diagonal entry {info - 1}",
            index=info - 1,
        )
    if info < 0:
        raise ValueError(f"dtrtrs: illegal argument {-info}")
    return x[:, 0] if (vector and x.ndim == 2) else x


def log_det_from_chol(l):
    """log-determinant of the factored matrix, evaluated as 2*sum(log l_ii)."""
    m = _factor_matrix(l)
    return 2.0 * float(np.sum(np.log(np.diag(m))))


def solve_spd_from_chol(l, rhs):
    """``A^{-1} rhs`` from ``chol(A)`` via two triangular solves."""
    return trsolve(l, trsolve(l, rhs, side="lower"), side="upper")


def mvn_from_noise(mean, chol_cov, z):
    """Transport iid standard-normal noise: ``mean + L z``."""
    m = _factor_matrix(chol_cov)
    mean = np.asarray(mean, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if mean.shape[0] != m.shape[0] or z.shape[0] != m.shape[0]:
        raise DimensionMismatch("mean/noise length must match factor dimension")
    return mean + m @ z


def mvn_draw(mean, chol_cov, rng):
    """One multivariate-normal draw; deterministic given the generator state."""
    m = _factor_matrix(chol_cov)
    return mvn_from_noise(mean, chol_cov, rng.standard_normal(m.shape[0]))
