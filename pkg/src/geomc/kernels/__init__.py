"""Backend selection for the hot covariance kernel.

The Matern correlation dominates covariance-matrix construction because each
entry needs a modified Bessel K evaluation.  A compiled Cython implementation
(``_native``) is preferred at import time; the pure-Python ``_fallback``
implements the identical algorithm and takes over when the extension was not
built.  Set ``GEOMC_FORCE_FALLBACK=1`` to force the fallback (used by the
backend-equivalence tests and the benchmark).

The remaining correlation families are simple vectorized exponentials for
which numpy's SIMD loops are already optimal; they have no compiled variant.
"""

import os

from . import _fallback

if os.environ.get("GEOMC_FORCE_FALLBACK"):
    _impl = _fallback
else:
    try:
        from . import _native as _impl
    except ImportError:
        _impl = _fallback

BACKEND = "fallback" if _impl is _fallback else "native"

bessel_k = _impl.bessel_k
matern_corr = _impl.matern_corr
matern_fill = _impl.matern_fill

fallback = _fallback
native = _impl if BACKEND == "native" else None

__all__ = [
    "BACKEND",
    "bessel_k",
    "matern_corr",
    "matern_fill",
    "fallback",
    "native",
]
