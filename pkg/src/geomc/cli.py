"""Batch front end: ``geomc <command> --config <path> [--seed N] [--out DIR]
[--quiet]``.

Commands: fit-full, fit-pp, recover, predict, fit-dynamic.  Input data and
model sections come from the config file; posterior sample blocks are
written as CSVs plus a ``manifest.json`` recording config hash, seed,
acceptance rates and wall time.  Exit codes: 0 success, 2 config error,
3 data error, 4 numerical failure.
"""

import argparse
import sys
import time

import numpy as np

from . import __version__, kernels
from .config import COMMANDS, load_config
from .dataio import (
    load_dynamic_dataset,
    load_prediction_frame,
    load_spatial_dataset,
    read_table,
)
from .dynamic import DynamicPriors, DynamicStarting, fit_dynamic
from .errors import (
    AllMissingStep,
    ConfigError,
    DimensionMismatch,
    DuplicateCoords,
    GeomcError,
    InvalidParam,
    MissingNotAllowed,
    NotPositiveDefinite,
    OutOfSupport,
    ParseError,
    RankDeficientX,
    SingularTriangular,
    TooManyKnots,
)
from .fullrank import FullRankFit, ThetaChain, fit_full_rank
from .lowrank import LowRankFit, PPGeometry, fit_lowrank
from .model import KnotSpec
from .predict import PredictionRequest, predict
from .recover import recover
from .store import SampleStore, read_manifest, write_manifest

_CONFIG_ERRORS = (ConfigError,)
_DATA_ERRORS = (
    ParseError,
    MissingNotAllowed,
    AllMissingStep,
    RankDeficientX,
    TooManyKnots,
    DimensionMismatch,
    InvalidParam,
    OutOfSupport,
)
_NUMERICAL_ERRORS = (NotPositiveDefinite, SingularTriangular, DuplicateCoords)


def _beta_headers(cfg):
    names = list(cfg.covariate_names())
    if cfg.intercept():
        names = ["(Intercept)"] + names
    return ["beta." + n for n in names]


def _load_spatial(cfg):
    return load_spatial_dataset(
        cfg.spatial_csv(),
        cfg.coord_names(),
        cfg.outcome_name(),
        cfg.covariate_names(),
        cfg.intercept(),
    )


def _finish(cfg, store, extra_manifest, t0):
    outdir = cfg.out_dir()
    records = store.save(outdir)
    manifest = {
        "command": cfg.command,
        "config_sha256": cfg.config_hash(),
        "package_version": __version__,
        "kernel_backend": kernels.BACKEND,
        "wall_time_s": round(time.perf_counter() - t0, 3),
        "files": records,
    }
    manifest.update(extra_manifest)
    write_manifest(outdir, manifest)
    return outdir


def _cmd_fit_full(cfg, emit):
    t0 = time.perf_counter()
    data = _load_spatial(cfg)
    family = cfg.family()
    options = cfg.sampler_options()
    theta_spec = cfg.theta_spec(family)
    beta_prior = cfg.beta_prior(data.p)
    fit = fit_full_rank(data, family, theta_spec, beta_prior, options,
                        progress=emit)
    store = SampleStore()
    store.add("theta", fit.chain.samples, theta_spec.headers())
    _finish(cfg, store, {
        "seed": options.seed,
        "n_samples": options.n_samples,
        "acceptance": {"overall": fit.chain.accept_rate},
    }, t0)


def _cmd_fit_pp(cfg, emit):
    t0 = time.perf_counter()
    data = _load_spatial(cfg)
    family = cfg.family()
    options = cfg.sampler_options()
    theta_spec = cfg.theta_spec(family)
    beta_prior = cfg.beta_prior(data.p)
    knot_spec = cfg.knot_spec()
    fit = fit_lowrank(data, family, knot_spec, theta_spec, beta_prior,
                      options, progress=emit)
    store = SampleStore()
    store.add("theta", fit.chain.samples, theta_spec.headers())
    store.add("beta", fit.beta, _beta_headers(cfg))
    store.add("knots", fit.knots, ["x", "y"])
    _finish(cfg, store, {
        "seed": options.seed,
        "n_samples": options.n_samples,
        "modified_pp": fit.modified,
        "parametrization": fit.parametrization,
        "n_knots": int(fit.knots.shape[0]),
        "acceptance": {"overall": fit.chain.accept_rate},
    }, t0)


def _rebuild_fit(cfg, data, chain_dir):
    """Reassemble a fit object from a previous run directory."""
    manifest = read_manifest(chain_dir)
    family = cfg.family()
    options = cfg.sampler_options()
    theta_spec = cfg.theta_spec(family)
    beta_prior = cfg.beta_prior(data.p)
    store = SampleStore.load(chain_dir, names=["theta"])
    theta, _ = store.get("theta")
    chain = ThetaChain(
        samples=theta,
        log_targets=np.zeros(theta.shape[0]),
        names=theta_spec.names,
        accept_rate=float(manifest.get("acceptance", {}).get("overall", 0.0)),
        n_proposals=0,
    )
    if manifest["command"] == "fit-full":
        return FullRankFit(data, family, theta_spec, beta_prior, options, chain)
    if manifest["command"] != "fit-pp":
        raise ConfigError(
            f"{chain_dir}: cannot recover/predict from a "
            f"{manifest['command']} run"
        )
    pp_store = SampleStore.load(chain_dir, names=["beta", "knots"])
    beta, _ = pp_store.get("beta")
    knots, _ = pp_store.get("knots")
    return LowRankFit(
        data=data,
        family=family,
        theta_spec=theta_spec,
        beta_prior=beta_prior,
        options=options,
        knots=knots,
        modified=bool(manifest["modified_pp"]),
        parametrization=manifest["parametrization"],
        chain=chain,
        beta=beta,
        _geometry=PPGeometry(data.coords, knots, family),
    )


def _cmd_recover(cfg, emit):
    t0 = time.perf_counter()
    data = _load_spatial(cfg)
    section = cfg.recover.require()
    chain_dir = section.need("chain.dir")
    fit = _rebuild_fit(cfg, data, chain_dir)
    start = section.number("start")
    thin = int(section.number("thin", 1))
    seed = cfg.seed_override
    rec = recover(
        fit,
        start=int(start) if start is not None else None,
        thin=thin,
        seed=seed,
        progress=emit,
        report_interval=int(section.number("n.report", 0)),
    )
    store = SampleStore()
    store.add("beta", rec.beta, _beta_headers(cfg))
    store.add("w", rec.w, [f"w.{i + 1}" for i in range(rec.w.shape[1])])
    store.add("theta.recover", rec.theta_subset, fit.theta_spec.headers())
    if rec.w_knots is not None:
        store.add("w.knots", rec.w_knots,
                  [f"w.star.{i + 1}" for i in range(rec.w_knots.shape[1])])
    _finish(cfg, store, {
        "seed": fit.options.seed if seed is None else seed,
        "chain_dir": chain_dir,
        "n_retained": int(rec.n_retained),
    }, t0)


def _cmd_predict(cfg, emit):
    t0 = time.perf_counter()
    data = _load_spatial(cfg)
    section = cfg.predict.require()
    chain_dir = section.need("chain.dir")
    fit = _rebuild_fit(cfg, data, chain_dir)
    coords, x0 = load_prediction_frame(
        section.need("csv"), cfg.coord_names(), cfg.covariate_names(),
        cfg.intercept(),
    )
    start = section.number("start")
    request = PredictionRequest(
        new_coords=coords,
        x0=x0,
        start=int(start) if start is not None else None,
        thin=int(section.number("thin", 1)),
        mode=section.get("mode", "conditional"),
        joint=section.flag("joint", False),
        latent=section.flag("latent", False),
    )
    seed = cfg.seed_override
    pred = predict(fit, request, seed=seed, progress=emit,
                   report_interval=int(section.number("n.report", 0)))
    store = SampleStore()
    headers = [f"sample.{i + 1}" for i in range(pred.y0.shape[1])]
    store.add("y0", pred.y0, headers)
    _finish(cfg, store, {
        "seed": fit.options.seed if seed is None else seed,
        "chain_dir": chain_dir,
        "mode": request.mode,
        "n_locations": int(pred.y0.shape[0]),
        "n_retained": int(pred.y0.shape[1]),
    }, t0)


def _dynamic_inputs(cfg):
    data = load_dynamic_dataset(
        cfg.data.need("coords.csv"),
        cfg.data.need("y.csv"),
        cfg.data.need("x.csv"),
        cfg.coord_names(),
        cfg.covariate_names(),
        cfg.intercept(),
    )
    nt, p = data.n_steps, data.p
    priors_sec = cfg.priors.require()
    from .model import ScalarPrior

    def pair(key):
        vals = priors_sec.get(key)
        if vals is None:
            raise ConfigError(f"{cfg.path}: missing {key!r} in [priors]")
        a, b = [float(v) for v in vals.split(",")]
        return a, b

    m0 = cfg.priors.floats("beta.0.mu", [0.0])
    if len(m0) == 1:
        m0 = m0 * p
    s0_diag = cfg.priors.floats("beta.0.sigma.diag", [100000.0])
    if len(s0_diag) == 1:
        s0_diag = s0_diag * p
    iw_df = cfg.priors.number("sigma.eta.IW.df", 2.0)
    iw_diag = cfg.priors.floats("sigma.eta.IW.scale.diag", [0.001])
    if len(iw_diag) == 1:
        iw_diag = iw_diag * p
    priors = DynamicPriors.build(
        nt,
        np.array(m0),
        np.diag(s0_diag),
        iw_df,
        np.diag(iw_diag),
        ScalarPrior.inverse_gamma(*pair("sigma.sq.IG")),
        ScalarPrior.inverse_gamma(*pair("tau.sq.IG")),
        ScalarPrior.uniform(*pair("phi.Unif")),
    )
    st = cfg.starting.require()
    eta_diag = cfg.starting.floats("sigma.eta.diag", [0.01])
    if len(eta_diag) == 1:
        eta_diag = eta_diag * p
    beta_start = cfg.starting.floats("beta", [0.0])
    if len(beta_start) == 1:
        beta_start = beta_start * p
    starting = DynamicStarting.build(
        nt, p,
        np.array(beta_start),
        st.number("sigma.sq", 1.0),
        st.number("tau.sq", 1.0),
        st.need("phi") and st.number("phi"),
        np.diag(eta_diag),
    )
    tuning_phi = cfg.tuning.require().number("phi")
    if tuning_phi is None:
        raise ConfigError(f"{cfg.path}: missing phi tuning")
    return data, priors, starting, tuning_phi


def _cmd_fit_dynamic(cfg, emit):
    t0 = time.perf_counter()
    data, priors, starting, tuning_phi = _dynamic_inputs(cfg)
    family = cfg.family()
    options = cfg.sampler_options()
    fit = fit_dynamic(data, family, priors, starting, tuning_phi, options,
                      progress=emit, nu=cfg.fixed_nu(),
                      get_fitted=cfg.output.flag("save.fitted", True))
    nt, n, p = data.n_steps, data.n, data.p
    m = options.n_samples
    store = SampleStore()
    theta_cols = []
    theta_head = []
    for t in range(nt):
        theta_cols += [fit.sigma_sq[:, t], fit.tau_sq[:, t], fit.phi[:, t]]
        theta_head += [f"sigma.sq.{t + 1}", f"tau.sq.{t + 1}", f"phi.{t + 1}"]
    store.add("theta", np.column_stack(theta_cols), theta_head)
    base = _beta_headers(cfg)
    beta_head = [f"{b}.{t + 1}" for t in range(nt) for b in base]
    store.add("beta", fit.beta.reshape(m, nt * p), beta_head)
    eta_head = [f"sigma.eta.{i + 1}.{j + 1}" for i in range(p) for j in range(p)]
    store.add("sigma.eta", fit.sigma_eta.reshape(m, p * p), eta_head)
    mask = data.missing_mask
    if mask.any() and fit.y_rep is not None:
        rows, cols = np.nonzero(mask)
        block = fit.y_rep[:, rows, cols]
        head = [f"y.{r + 1}.{c + 1}" for r, c in zip(rows, cols)]
        store.add("y.missing", block, head)
    if cfg.output.flag("save.u", False):
        u_head = [f"u.{i + 1}.{t + 1}" for t in range(nt) for i in range(n)]
        store.add("u", fit.u.reshape(m, nt * n), u_head)
    _finish(cfg, store, {
        "seed": options.seed,
        "n_samples": options.n_samples,
        "n_missing": int(data.n_missing),
        "acceptance": {
            "overall": fit.accept_rate,
            "by_step": [round(r, 6) for r in fit.accept_rate_by_step],
        },
    }, t0)


_DISPATCH = {
    "fit-full": _cmd_fit_full,
    "fit-pp": _cmd_fit_pp,
    "recover": _cmd_recover,
    "predict": _cmd_predict,
    "fit-dynamic": _cmd_fit_dynamic,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="geomc",
        description="Bayesian Gaussian spatial regression (full-rank, "
        "predictive-process and dynamic spatio-temporal MCMC)",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="run configuration file")
        cmd.add_argument("--seed", type=int, default=None,
                         help="override the config seed")
        cmd.add_argument("--out", default=None,
                         help="override the output directory")
        cmd.add_argument("--quiet", action="store_true",
                         help="suppress console progress")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    emit = (lambda line: None) if args.quiet else print
    try:
        cfg = load_config(args.command, args.config, args.seed, args.out)
        cfg.out_dir()  # fail fast on missing output location
        _DISPATCH[args.command](cfg, emit)
    except _CONFIG_ERRORS as err:
        print(f"geomc: config error: {err}", file=sys.stderr)
        return 2
    except _NUMERICAL_ERRORS as err:
        print(f"geomc: numerical failure: {err}", file=sys.stderr)
        return 4
    except _DATA_ERRORS as err:
        print(f"geomc: data error: {err}", file=sys.stderr)
        return 3
    except GeomcError as err:
        print(f"geomc: error: {err}", file=sys.stderr)
        return 3
    except OSError as err:
        print(f"geomc: config error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
