# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled Matern correlation kernel.

Mirrors ``_fallback.py`` bit-for-bit in algorithm: Temme series below x=2,
Steed continued fraction at and above, upward order recurrence with
rescaling.  Only the per-element evaluation is compiled; array plumbing
stays in numpy.
"""

from libc.math cimport (M_PI, cosh, exp, fabs, lgamma, log, sin, sinh, sqrt,
                        tgamma)

import numpy as np

cdef double _EULER = 0.5772156649015329
cdef double _GAM1_C2 = 0.042002635034095235
cdef double _RESCALE = 1e280
cdef double _LOG_RESCALE = log(1e280)
cdef double _INF = float("inf")


cdef void _kv_pair(double mu, double x, double* kmu_out, double* kmu1_out) noexcept nogil:
    cdef double mu2 = mu * mu
    cdef double x2, pimu, fact, d, e, fact2, gampl, gammi, gam1, gam2
    cdef double ff, total, p, q, c, d2, total1, dl
    cdef double b, h, dh, q1, q2, a1, a, s, qnew, ds
    cdef int i
    if x < 2.0:
        x2 = 0.5 * x
        pimu = M_PI * mu
        fact = pimu / sin(pimu) if fabs(pimu) > 1e-15 else 1.0
        d = -log(x2)
        e = mu * d
        fact2 = sinh(e) / e if fabs(e) > 1e-15 else 1.0
        gampl = 1.0 / tgamma(1.0 + mu)
        gammi = 1.0 / tgamma(1.0 - mu)
        if fabs(mu) < 1e-5:
            gam1 = -_EULER + _GAM1_C2 * mu2
        else:
            gam1 = (gammi - gampl) / (2.0 * mu)
        gam2 = 0.5 * (gammi + gampl)
        ff = fact * (gam1 * cosh(e) + gam2 * fact2 * d)
        total = ff
        e = exp(e)
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
            if fabs(dl) < fabs(total) * 1e-17:
                break
        kmu_out[0] = total
        kmu1_out[0] = total1 * (2.0 / x)
        return
    b = 2.0 * (1.0 + x)
    d = 1.0 / b
    h = d
    dh = d
    q1 = 0.0
    q2 = 1.0
    a1 = 0.25 - mu2
    q = a1
    c = a1
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
        if fabs(ds) < fabs(s) * 1e-16:
            break
    h = a1 * h
    kmu_out[0] = sqrt(M_PI / (2.0 * x)) * exp(-x) / s
    kmu1_out[0] = kmu_out[0] * (mu + x + 0.5 - h) / x


cdef double _kv_scaled(double nu, double x, double* slog_out) noexcept nogil:
    cdef int m = <int>(nu + 0.5)
    cdef double mu = nu - m
    cdef double kmu, kmu1, km, k, knext
    cdef double slog = 0.0
    cdef int j
    _kv_pair(mu, x, &kmu, &kmu1)
    if m == 0:
        slog_out[0] = 0.0
        return kmu
    km = kmu
    k = kmu1
    for j in range(1, m):
        knext = km + (2.0 * (mu + j) / x) * k
        km = k
        k = knext
        if fabs(k) > _RESCALE:
            k /= _RESCALE
            km /= _RESCALE
            slog += _LOG_RESCALE
    slog_out[0] = slog
    return k


cdef double _matern_corr(double x, double nu) noexcept nogil:
    cdef double k, slog, log_rho, rho
    if x <= 0.0:
        return 1.0
    k = _kv_scaled(nu, x, &slog)
    if k <= 0.0:
        return 0.0
    log_rho = log(k) + slog + nu * log(x) - (nu - 1.0) * log(2.0) - lgamma(nu)
    if log_rho >= 0.0:
        return 1.0
    rho = exp(log_rho)
    return rho if rho > 0.0 else 0.0


def bessel_k(double nu, double x):
    """Modified Bessel function of the second kind K_nu(x), x > 0."""
    cdef double slog, k
    if x < 0.0:
        raise ValueError("bessel_k requires x >= 0")
    if x == 0.0:
        return _INF
    k = _kv_scaled(fabs(nu), x, &slog)
    if slog == 0.0:
        return k
    return k * exp(slog)


def matern_corr(double x, double nu):
    """Matern correlation (phi already folded into x): in [0, 1]."""
    return _matern_corr(x, nu)


def matern_fill(double[::1] d, double[::1] out, double phi, double nu,
                double sigma_sq):
    """out[i] = sigma_sq * matern_corr(d[i] * phi, nu), elementwise."""
    cdef Py_ssize_t i, n = d.shape[0]
    if out.shape[0] != n:
        raise ValueError("d and out must have the same length")
    with nogil:
        for i in range(n):
            out[i] = sigma_sq * _matern_corr(d[i] * phi, nu)
