"""Pure-Python implementation of the Matern correlation kernel.

The modified Bessel function of the second kind K_nu is evaluated in-repo:
a Temme-style power series below x=2, a Steed continued fraction at and
above x=2, and an upward recurrence in the order, with on-the-fly rescaling
so intermediate values never overflow.  The compiled backend in
``_native.pyx`` mirrors this algorithm exactly; this module is the fallback
selected when the extension is unavailable, and the reference the backends
are tested against each other with.
"""

import math

import numpy as np

_EULER = 0.5772156649015329
# mu^2 coefficient of (1/Gamma(1-mu) - 1/Gamma(1+mu)) / (2 mu) about mu=0
_GAM1_C2 = 0.042002635034095235
_RESCALE = 1e280
_LOG_RESCALE = math.log(_RESCALE)


def _kv_pair(mu, x):
    """(K_mu(x), K_{mu+1}(x)) for |mu| <= 0.5 and x > 0."""
    mu2 = mu * mu
    if x < 2.0:
        # power series around x=0
        x2 = 0.5 * x
        pimu = math.pi * mu
        fact = pimu / math.sin(pimu) if abs(pimu) > 1e-15 else 1.0
        d = -math.log(x2)
        e = mu * d
        fact2 = math.sinh(e) / e if abs(e) > 1e-15 else 1.0
        gampl = 1.0 / math.gamma(1.0 + mu)
        gammi = 1.0 / math.gamma(1.0 - mu)
        if abs(mu) < 1e-5:
            gam1 = -_EULER + _GAM1_C2 * mu2
        else:
            gam1 = (gammi - gampl) / (2.0 * mu)
        gam2 = 0.5 * (gammi + gampl)
        ff = fact * (gam1 * math.cosh(e) + gam2 * fact2 * d)
        total = ff
        e = math.exp(e)
        p = 0.5 * e / gampl
        q = 0.5 / (e * gammi)
        c = 1.0
        d2 = x2 * x2
        total1 = p
        for i in range(1, 500):
            ff = (i * ff + p + q) / (i * i - mu2)
            c *= d2 / i
            p /= i - mu
            q /= i + mu
            dl = c * ff
            total += dl
            total1 += c * (p - i * ff)
            if abs(dl) < abs(total) * 1e-17:
                break
        return total, total1 * (2.0 / x)
    # Steed continued fraction, stable for x >= 2
    b = 2.0 * (1.0 + x)
    d = 1.0 / b
    h = dh = d
    q1 = 0.0
    q2 = 1.0
    a1 = 0.25 - mu2
    q = c = a1
    a = -a1
    s = 1.0 + q * dh
    for i in range(2, 20000):
        a -= 2.0 * (i - 1)
        c = -a * c / i
        qnew = (q1 - b * q2) / a
        q1 = q2
        q2 = qnew
        q += c * qnew
        b += 2.0
        d = 1.0 / (b + a * d)
        dh = (b * d - 1.0) * dh
        h += dh
        ds = q * dh
        s += ds
        if abs(ds) < abs(s) * 1e-16:
            break
    h = a1 * h
    kmu = math.sqrt(math.pi / (2.0 * x)) * math.exp(-x) / s
    return kmu, kmu * (mu + x + 0.5 - h) / x


def _kv_scaled(nu, x):
    """K_nu(x) as (mantissa, log_scale): K = mantissa * exp(log_scale)."""
    m = int(nu + 0.5)
    mu = nu - m  # in [-0.5, 0.5)
    kmu, kmu1 = _kv_pair(mu, x)
    if m == 0:
        return kmu, 0.0
    km, k = kmu, kmu1
    slog = 0.0
    for j in range(1, m):
        km, k = k, km + (2.0 * (mu + j) / x) * k
        if abs(k) > _RESCALE:
            k /= _RESCALE
            km /= _RESCALE
            slog += _LOG_RESCALE
    return k, slog


def bessel_k(nu, x):
    """Modified Bessel function of the second kind K_nu(x), x > 0."""
    if x < 0.0:
        raise ValueError("bessel_k requires x >= 0")
    if x == 0.0:
        return math.inf
    k, slog = _kv_scaled(abs(nu), x)
    try:
        return k * math.exp(slog)
    except OverflowError:
        return math.inf


def matern_corr(x, nu):
    """Matern correlation (x phi already folded into x): in [0, 1]."""
    if x <= 0.0:
        return 1.0
    k, slog = _kv_scaled(nu, x)
    if k <= 0.0:
        return 0.0
    log_rho = (
        math.log(k)
        + slog
        + nu * math.log(x)
        - (nu - 1.0) * math.log(2.0)
        - math.lgamma(nu)
    )
    if log_rho >= 0.0:
        return 1.0
    rho = math.exp(log_rho)
    return rho if rho > 0.0 else 0.0


_matern_ufunc_cache = {}


def matern_fill(d, out, phi, nu, sigma_sq):
    """out[i] = sigma_sq * matern_corr(d[i] * phi, nu), elementwise."""
    key = (phi, nu)
    uf = _matern_ufunc_cache.get(key)
    if uf is None:
        uf = np.frompyfunc(lambda di: matern_corr(di * phi, nu), 1, 1)
        if len(_matern_ufunc_cache) > 64:
            _matern_ufunc_cache.clear()
        _matern_ufunc_cache[key] = uf
    np.multiply(uf(d).astype(np.float64), sigma_sq, out=out)
