"""Console banner and progress formatting.

Format strings are fixed contracts: "Sampled: k of N, pct%" progress lines
with percentages that increase monotonically and end at 100.00%, and the
"General model description" banner echoing data sizes and priors.
"""

__all__ = [
    "banner_lines",
    "dynamic_banner_lines",
    "sampling_header",
    "recover_header",
    "ProgressReporter",
]

_THIN_RULE = "-" * 40
_RULE = "-" * 49

_PRIOR_LABELS = {
    "sigma_sq": "sigma.sq",
    "tau_sq": "tau.sq",
    "phi": "phi",
    "nu": "nu",
}


def _scalar_prior_line(name, prior, suffix=""):
    label = _PRIOR_LABELS[name] + suffix
    if prior.kind == "inverse-gamma":
        return f"\t{label} IG hyperpriors shape={prior.a:.5f} and scale={prior.b:.5f}"
    return f"\t{label} Unif hyperpriors a={prior.a:.5f} and b={prior.b:.5f}"


def _beta_prior_lines(beta_prior):
    if beta_prior is None or beta_prior.is_flat:
        return ["\tbeta flat."]
    lines = ["\tbeta normal:"]
    mu = "\t".join(f"{v:.3f}" for v in beta_prior.mu_beta)
    lines.append(f"\tm_0:\t{mu}\t")
    lines.append("\tSigma_0:")
    for row in beta_prior.sigma_beta:
        lines.append("\t" + "\t".join(f"{v:.3f}" for v in row) + "\t")
    lines.append("")
    return lines


def banner_lines(n, p, family, n_samples, theta_spec, beta_prior,
                 knot_count=None, modified=False):
    """General-model-description banner for the spatial fits."""
    lines = [
        _THIN_RULE,
        "\tGeneral model description",
        _THIN_RULE,
        f"Model fit with {n} observations.",
        "",
        f"Number of covariates {p} (including intercept if specified).",
        "",
        f"Using the {family.kind} spatial correlation model.",
        "",
    ]
    if knot_count is not None:
        form = "modified" if modified else "non-modified"
        lines += [f"Using {form} predictive process with {knot_count} knots.", ""]
    lines += [f"Number of MCMC samples {n_samples}.", "", "Priors and hyperpriors:"]
    lines += _beta_prior_lines(beta_prior)
    for param in theta_spec:
        lines.append(_scalar_prior_line(param.name, param.prior))
    return lines


def dynamic_banner_lines(n, n_steps, n_missing, p, family, n_samples, priors):
    """Banner for the dynamic space-time model, with per-step prior echo."""
    lines = [
        _THIN_RULE,
        "\tGeneral model description",
        _THIN_RULE,
        f"Model fit with {n} observations in {n_steps} time steps.",
        "",
        f"Number of missing observations {n_missing}.",
        "",
        f"Number of covariates {p} (including intercept if specified).",
        "",
        f"Using the {family.kind} spatial correlation model.",
        "",
        f"Number of MCMC samples {n_samples}.",
        "",
        "Priors and hyperpriors:",
        "\tbeta normal:",
        "\tm_0:\t" + "\t".join(f"{v:.3f}" for v in priors.m0) + "\t",
        "\tSigma_0:",
    ]
    for row in priors.sigma0:
        lines.append("\t" + "\t".join(f"{v:.3f}" for v in row) + "\t")
    lines.append("")
    for t in range(n_steps):
        lines.append(_scalar_prior_line("sigma_sq", priors.sigma_sq[t], f"_t={t + 1}"))
        lines.append(_scalar_prior_line("tau_sq", priors.tau_sq[t], f"_t={t + 1}"))
        lines.append(_scalar_prior_line("phi", priors.phi[t], f"_t={t + 1}"))
        lines.append("\t---")
    return lines


def sampling_header():
    return [_RULE, "\t\tSampling", _RULE]


def recover_header():
    return [_RULE, "\t\tRecovering beta and w", _RULE]


class ProgressReporter:
    """Emits paper-style progress blocks through a line callback."""

    def __init__(self, emit, total, interval, mean_rates=False, show_rates=True):
        self.emit = emit
        self.total = total
        self.interval = interval
        self.interval_label = (
            "Report interval Mean Metrop. Acceptance rate"
            if mean_rates
            else "Report interval Metrop. Acceptance rate"
        )
        self.show_rates = show_rates

    def due(self, k):
        """True when a report should be emitted after completing sample k."""
        if self.emit is None or self.interval <= 0:
            return False
        return k % self.interval == 0 or k == self.total

    def report(self, k, interval_rate=None, overall_rate=None):
        if self.emit is None:
            return
        pct = 100.0 * k / self.total
        self.emit(f"Sampled: {k} of {self.total}, {pct:.2f}%")
        if self.show_rates:
            self.emit(f"{self.interval_label}: {100.0 * interval_rate:.2f}%")
            self.emit(
                f"Overall Metrop. Acceptance rate: {100.0 * overall_rate:.2f}%"
            )
        self.emit(_RULE)
