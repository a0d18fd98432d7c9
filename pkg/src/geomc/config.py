"""Sectioned key-value run configuration.

One section per concern; every key is documented in the README with its
usual R-interface counterpart (e.g. ``sigma.sq.IG = 2, 1``).  Values are
comma-separated lists where more than one number is expected.  The CLI
passes the chosen subcommand; everything else lives in the file.
"""

import configparser
import hashlib
import os

import numpy as np

from .covariance import CovFamily
from .errors import ConfigError
from .model import BetaPrior, KnotSpec, SamplerOptions, ScalarPrior, ThetaSpec

__all__ = ["RunConfig", "load_config"]

COMMANDS = ("fit-full", "fit-pp", "recover", "predict", "fit-dynamic")


def _floats(raw):
    try:
        return [float(v) for v in raw.split(",") if v.strip() != ""]
    except ValueError as err:
        raise ConfigError(f"expected numbers, got {raw!r}") from err


def _names(raw):
    return [v.strip() for v in raw.split(",") if v.strip() != ""]


class _Section:
    """Missing-key-aware view over one config section."""

    def __init__(self, parser, name, path):
        self.name = name
        self.path = path
        self._data = dict(parser[name]) if parser.has_section(name) else None

    @property
    def present(self):
        return self._data is not None

    def require(self):
        if self._data is None:
            raise ConfigError(f"{self.path}: missing [{self.name}] section")
        return self

    def get(self, key, default=None):
        if self._data is None:
            return default
        return self._data.get(key, default)

    def need(self, key):
        value = self.get(key)
        if value is None:
            raise ConfigError(f"{self.path}: missing {key!r} in [{self.name}]")
        return value

    def floats(self, key, default=None):
        raw = self.get(key)
        return _floats(raw) if raw is not None else default

    def number(self, key, default=None):
        raw = self.get(key)
        if raw is None:
            return default
        vals = _floats(raw)
        if len(vals) != 1:
            raise ConfigError(f"{self.path}: {key!r} must be one number")
        return vals[0]

    def flag(self, key, default=False):
        raw = self.get(key)
        if raw is None:
            return default
        lowered = raw.strip().lower()
        if lowered in ("true", "yes", "1", "on"):
            return True
        if lowered in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"{self.path}: {key!r} must be a boolean, got {raw!r}")


class RunConfig:
    """Parsed configuration for one batch run."""

    def __init__(self, command, path, seed_override=None, out_override=None):
        if command not in COMMANDS:
            raise ConfigError(f"unknown command {command!r}")
        self.command = command
        self.path = path
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path) as fh:
            self.text = fh.read()
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read_string(self.text)
        except configparser.Error as err:
            raise ConfigError(f"{path}: {err}") from err
        self._parser = parser
        self.data = _Section(parser, "data", path)
        self.model = _Section(parser, "model", path)
        self.priors = _Section(parser, "priors", path)
        self.starting = _Section(parser, "starting", path)
        self.tuning = _Section(parser, "tuning", path)
        self.sampler = _Section(parser, "sampler", path)
        self.knots = _Section(parser, "knots", path)
        self.recover = _Section(parser, "recover", path)
        self.predict = _Section(parser, "predict", path)
        self.output = _Section(parser, "output", path)
        self.seed_override = seed_override
        self.out_override = out_override

    def config_hash(self):
        return hashlib.sha256(self.text.encode()).hexdigest()

    # ---- shared pieces -------------------------------------------------

    def out_dir(self):
        out = self.out_override or self.output.get("dir")
        if out is None:
            raise ConfigError(
                f"{self.path}: no output directory (--out or [output] dir)"
            )
        return out

    def family(self):
        section = self.model.require()
        kind = section.need("family")
        power = section.number("power")
        try:
            return CovFamily(kind, power)
        except Exception as err:
            raise ConfigError(f"{self.path}: {err}") from err

    def fixed_nu(self):
        return self.model.get("nu.fixed") and float(self.model.get("nu.fixed"))

    def sampler_options(self):
        section = self.sampler.require()
        seed = self.seed_override
        if seed is None:
            seed = section.number("seed")
        if seed is None:
            raise ConfigError(f"{self.path}: no seed ([sampler] seed or --seed)")
        try:
            return SamplerOptions(
                n_samples=int(section.number("n.samples", 0)),
                report_interval=int(section.number("n.report", 0)),
                adaptive=section.flag("amcmc", False),
                adapt_batch=int(section.number("adapt.batch", 25)),
                adapt_target=section.number("adapt.target", 0.44),
                seed=int(seed),
                burn_in_fraction=section.number("burn.in.fraction", 0.75),
            )
        except Exception as err:
            raise ConfigError(f"{self.path}: {err}") from err

    def _scalar_prior(self, key_base):
        ig = self.priors.get(f"{key_base}.IG")
        unif = self.priors.get(f"{key_base}.Unif")
        if ig is not None and unif is not None:
            raise ConfigError(f"{self.path}: {key_base} has two priors")
        if ig is not None:
            vals = _floats(ig)
            if len(vals) != 2:
                raise ConfigError(f"{self.path}: {key_base}.IG needs shape, scale")
            return ScalarPrior.inverse_gamma(*vals)
        if unif is not None:
            vals = _floats(unif)
            if len(vals) != 2:
                raise ConfigError(f"{self.path}: {key_base}.Unif needs a, b")
            return ScalarPrior.uniform(*vals)
        return None

    def theta_spec(self, family):
        self.priors.require()
        self.starting.require()
        self.tuning.require()
        key_of = {"sigma_sq": "sigma.sq", "tau_sq": "tau.sq", "phi": "phi",
                  "nu": "nu"}
        names = ["sigma_sq", "tau_sq", "phi"] + (["nu"] if family.needs_nu else [])
        priors, starts, tunings = {}, {}, {}
        for name in names:
            key = key_of[name]
            prior = self._scalar_prior(key)
            if prior is None:
                raise ConfigError(f"{self.path}: missing prior for {key}")
            start = self.starting.number(key)
            tune = self.tuning.number(key)
            if start is None or tune is None:
                raise ConfigError(
                    f"{self.path}: missing starting or tuning value for {key}"
                )
            priors[name] = prior
            starts[name] = start
            tunings[name] = tune
        try:
            return ThetaSpec.for_family(family, priors, starts, tunings)
        except Exception as err:
            raise ConfigError(f"{self.path}: {err}") from err

    def beta_prior(self, p):
        kind = (self.priors.get("beta", "flat") or "flat").strip().lower()
        if kind == "flat":
            return BetaPrior.flat()
        if kind != "normal":
            raise ConfigError(f"{self.path}: beta prior must be flat|normal")
        mu = self.priors.floats("beta.mu", [0.0] * p)
        diag = self.priors.floats("beta.sigma.diag")
        if diag is None:
            raise ConfigError(f"{self.path}: normal beta prior needs beta.sigma.diag")
        if len(mu) == 1:
            mu = mu * p
        if len(diag) == 1:
            diag = diag * p
        if len(mu) != p or len(diag) != p:
            raise ConfigError(f"{self.path}: beta prior length mismatch (p={p})")
        return BetaPrior.normal(np.array(mu), np.diag(diag))

    def knot_spec(self):
        section = self.knots.require()
        modified = section.flag("modified.pp", False)
        grid = section.get("grid")
        csv_path = section.get("csv")
        if (grid is None) == (csv_path is None):
            raise ConfigError(
                f"{self.path}: [knots] needs exactly one of grid / csv"
            )
        if grid is not None:
            vals = _floats(grid)
            if len(vals) not in (2, 3):
                raise ConfigError(f"{self.path}: grid = nx, ny[, extend]")
            extend = vals[2] if len(vals) == 3 else 0.0
            return KnotSpec.grid(int(vals[0]), int(vals[1]), extend,
                                 modified=modified)
        from .dataio import read_table

        headers, rows = read_table(csv_path)
        pts = np.array([[float(r[0]), float(r[1])] for r in rows])
        return KnotSpec.explicit(pts, modified=modified)

    # ---- data ----------------------------------------------------------

    def coord_names(self):
        return _names(self.data.require().need("coords"))

    def covariate_names(self):
        raw = self.data.get("covariates", "")
        return _names(raw) if raw else []

    def intercept(self):
        return self.data.flag("intercept", True)

    def spatial_csv(self):
        return self.data.require().need("csv")

    def outcome_name(self):
        return self.data.require().need("outcome")

    def check_files(self):
        """Referenced input files must exist (config error otherwise)."""
        keys = []
        if self.command == "fit-dynamic":
            keys = [(self.data, "coords.csv"), (self.data, "y.csv"),
                    (self.data, "x.csv")]
        elif self.command == "predict":
            keys = [(self.data, "csv"), (self.predict, "csv")]
        else:
            keys = [(self.data, "csv")]
        if self.knots.present and self.knots.get("csv"):
            keys.append((self.knots, "csv"))
        for section, key in keys:
            path = section.get(key)
            if path is not None and not os.path.exists(path):
                raise ConfigError(f"{self.path}: file not found: {path}")


def load_config(command, path, seed_override=None, out_override=None):
    cfg = RunConfig(command, path, seed_override, out_override)
    cfg.check_files()
    return cfg
