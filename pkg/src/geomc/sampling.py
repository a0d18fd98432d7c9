"""Shared MCMC machinery: random-walk steps, batch adaptation, retention.

A single chain is strictly sequential; every fit owns one
``numpy.random.Generator`` and draws from it in a fixed order, which makes
chains bit-reproducible for a given seed.
"""

import math

import numpy as np

from .errors import InvalidParam

__all__ = [
    "AcceptanceTracker",
    "AdaptiveScales",
    "joint_rw_step",
    "componentwise_rw_sweep",
    "retained_indices",
]


class AcceptanceTracker:
    """Counts acceptances overall and within the current report interval."""

    def __init__(self):
        self.accepted = 0
        self.proposed = 0
        self._interval_accepted = 0
        self._interval_proposed = 0

    def record(self, accepted, weight=1):
        self.proposed += weight
        self._interval_accepted += weight if accepted else 0
        self._interval_proposed += weight
        if accepted:
            self.accepted += weight

    def record_count(self, accepted, proposed):
        self.accepted += accepted
        self.proposed += proposed
        self._interval_accepted += accepted
        self._interval_proposed += proposed

    @property
    def overall_rate(self):
        return self.accepted / self.proposed if self.proposed else 0.0

    def take_interval_rate(self):
        rate = (
            self._interval_accepted / self._interval_proposed
            if self._interval_proposed
            else 0.0
        )
        self._interval_accepted = 0
        self._interval_proposed = 0
        return rate


class AdaptiveScales:
    """Per-component proposal scales with batch adaptation.

    Every ``batch`` iterations each log-scale moves by
    ``min(0.01, batch_count**-0.5)`` toward the target acceptance rate
    (0.44 per scalar component by default).
    """

    def __init__(self, tuning_sd, batch=25, target=0.44):
        self.scales = np.asarray(tuning_sd, dtype=np.float64).copy()
        if np.any(self.scales <= 0):
            raise InvalidParam("tuning scales must be > 0")
        self.batch = batch
        self.target = target
        self._accepts = np.zeros(self.scales.shape[0])
        self._count = 0
        self._batches_done = 0

    def record(self, accepted_mask):
        self._accepts += accepted_mask
        self._count += 1
        if self._count == self.batch:
            self._batches_done += 1
            delta = min(0.01, self._batches_done ** -0.5)
            rates = self._accepts / self.batch
            factors = np.where(rates > self.target, math.exp(delta), math.exp(-delta))
            self.scales *= factors
            self._accepts[:] = 0.0
            self._count = 0


def joint_rw_step(z, logpost, aux, tuning_sd, evaluate, rng):
    """One joint random-walk Metropolis step on the transformed scale.

    ``evaluate(z) -> (logpost, aux)`` may return ``-inf`` to force
    rejection.  Adding any constant to the log-target leaves the accept
    decision unchanged.  Returns ``(z, logpost, aux, accepted)``.
    """
    noise = rng.standard_normal(z.shape[0])
    z_prop = z + tuning_sd * noise
    lp_prop, aux_prop = evaluate(z_prop)
    if math.log(rng.random()) < lp_prop - logpost:
        return z_prop, lp_prop, aux_prop, True
    return z, logpost, aux, False


def componentwise_rw_sweep(z, logpost, aux, tuning_sd, evaluate, rng):
    """One Metropolis-within-Gibbs sweep over the components of ``z``.

    Returns ``(z, logpost, aux, accepted_mask)``.
    """
    z = z.copy()
    accepted = np.zeros(z.shape[0], dtype=bool)
    for j in range(z.shape[0]):
        z_prop = z.copy()
        z_prop[j] += tuning_sd[j] * rng.standard_normal()
        lp_prop, aux_prop = evaluate(z_prop)
        if math.log(rng.random()) < lp_prop - logpost:
            z = z_prop
            logpost = lp_prop
            aux = aux_prop
            accepted[j] = True
    return z, logpost, aux, accepted


def retained_indices(n_samples, start, thin):
    """0-based indices of retained iterations start, start+thin, ... <= M.

    ``start`` is the 1-based iteration number of the first retained sample;
    the endpoint is inclusive, so a 5000-sample chain with start=3750 and
    thin=5 retains 251 draws.
    """
    if not 1 <= start <= n_samples:
        raise InvalidParam(f"start must be in [1, {n_samples}], got {start}")
    if thin < 1:
        raise InvalidParam("thin must be >= 1")
    return np.arange(start - 1, n_samples, thin)
