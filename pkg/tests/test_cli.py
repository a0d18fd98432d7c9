import math
import os

import numpy as np
import pytest

from geomc.cli import main
from geomc.covariance import CovFamily, ProcessParams, cov_matrix
from geomc.linalg import chol
from geomc.store import SampleStore, read_manifest

BASE_CONFIG = """
[data]
csv = {data_csv}
coords = x, y
outcome = yobs
covariates = cov1
intercept = true

[model]
family = exponential

[priors]
beta = flat
sigma.sq.IG = 2, 1
tau.sq.IG = 2, 1
phi.Unif = 3, 30

[starting]
sigma.sq = 1
tau.sq = 1
phi = 6

[tuning]
sigma.sq = 0.1
tau.sq = 0.1
phi = 0.316

[sampler]
n.samples = {n_samples}
n.report = {n_report}
seed = 42
"""


def write_spatial_csv(path, n=25, seed=0, na_cell=False):
    rng = np.random.default_rng(seed)
    coords = rng.random((n, 2))
    cov1 = rng.normal(size=n)
    params = ProcessParams(sigma_sq=2.0, phi=6.0, tau_sq=1.0)
    k = cov_matrix(coords, CovFamily("exponential"), params)
    w = chol(k).lower @ rng.standard_normal(n)
    y = 1.0 + 5.0 * cov1 + w + rng.standard_normal(n)
    lines = ["x,y,yobs,cov1"]
    for i in range(n):
        yval = "NA" if (na_cell and i == 2) else f"{y[i]:.17g}"
        lines.append(f"{coords[i,0]:.17g},{coords[i,1]:.17g},{yval},{cov1[i]:.17g}")
    path.write_text("\n".join(lines) + "\n")


def write_config(path, data_csv, n_samples=200, n_report=0, extra=""):
    path.write_text(
        BASE_CONFIG.format(data_csv=data_csv, n_samples=n_samples,
                           n_report=n_report) + extra
    )


class TestFitFull:
    def test_paper_shaped_output(self, tmp_path, capsys):
        data_csv = tmp_path / "data.csv"
        write_spatial_csv(data_csv, n=25)
        cfg = tmp_path / "run.ini"
        write_config(cfg, data_csv, n_samples=5000, n_report=2500)
        out = tmp_path / "fit"
        assert main(["fit-full", "--config", str(cfg), "--out", str(out)]) == 0

        store = SampleStore.load(out, names=["theta"])
        theta, headers = store.get("theta")
        assert theta.shape == (5000, 3)
        assert headers == ["sigma.sq", "tau.sq", "phi"]

        console = capsys.readouterr().out
        assert "Model fit with 25 observations." in console
        assert "Using the exponential spatial correlation model." in console
        assert "Number of MCMC samples 5000." in console
        assert "\tbeta flat." in console
        assert "\tsigma.sq IG hyperpriors shape=2.00000 and scale=1.00000" in console
        assert "\tphi Unif hyperpriors a=3.00000 and b=30.00000" in console
        sampled = [l for l in console.splitlines() if l.startswith("Sampled:")]
        assert "Sampled: 2500 of 5000, 50.00%" in sampled
        assert sampled[-1] == "Sampled: 5000 of 5000, 100.00%"
        pcts = [float(l.split()[-1].rstrip("%")) for l in sampled]
        assert pcts == sorted(pcts)
        assert any(l.startswith("Overall Metrop. Acceptance rate:")
                   for l in console.splitlines())

        manifest = read_manifest(out)
        assert manifest["command"] == "fit-full"
        assert manifest["seed"] == 42
        assert any(f["name"] == "theta" for f in manifest["files"])

    def test_bitwise_reproducibility(self, tmp_path):
        data_csv = tmp_path / "data.csv"
        write_spatial_csv(data_csv)
        cfg = tmp_path / "run.ini"
        write_config(cfg, data_csv, n_samples=100)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["fit-full", "--config", str(cfg), "--out", str(out1),
                     "--quiet"]) == 0
        assert main(["fit-full", "--config", str(cfg), "--out", str(out2),
                     "--quiet"]) == 0
        assert (out1 / "theta.csv").read_bytes() == (out2 / "theta.csv").read_bytes()

    def test_seed_override_changes_samples(self, tmp_path):
        data_csv = tmp_path / "data.csv"
        write_spatial_csv(data_csv)
        cfg = tmp_path / "run.ini"
        write_config(cfg, data_csv, n_samples=50)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["fit-full", "--config", str(cfg), "--out", str(out1), "--quiet"])
        main(["fit-full", "--config", str(cfg), "--out", str(out2), "--quiet",
              "--seed", "7"])
        a = (out1 / "theta.csv").read_text()
        b = (out2 / "theta.csv").read_text()
        assert a != b
        assert read_manifest(out2)["seed"] == 7


class TestRecoverPredict:
    def run_fit(self, tmp_path, pp=False):
        data_csv = tmp_path / "data.csv"
        write_spatial_csv(data_csv, n=30)
        extra = ""
        if pp:
            extra = "\n[knots]\ngrid = 3, 3, 0\nmodified.pp = true\n"
        cfg = tmp_path / "run.ini"
        write_config(cfg, data_csv, n_samples=5000, extra=extra)
        out = tmp_path / "fit"
        cmd = "fit-pp" if pp else "fit-full"
        assert main([cmd, "--config", str(cfg), "--out", str(out),
                     "--quiet"]) == 0
        return cfg, out, data_csv

    def test_recover_retention_count(self, tmp_path):
        cfg, fitdir, data_csv = self.run_fit(tmp_path)
        rec_cfg = tmp_path / "recover.ini"
        rec_cfg.write_text(
            cfg.read_text()
            + f"\n[recover]\nchain.dir = {fitdir}\nstart = 3750\nthin = 5\n"
        )
        out = tmp_path / "rec"
        assert main(["recover", "--config", str(rec_cfg), "--out", str(out),
                     "--quiet"]) == 0
        beta, headers = SampleStore.load(out, names=["beta"]).get("beta")
        assert beta.shape == (251, 2)
        assert headers == ["beta.(Intercept)", "beta.cov1"]
        w, _ = SampleStore.load(out, names=["w"]).get("w")
        assert w.shape == (251, 30)

    def test_pp_recover_and_predict(self, tmp_path):
        cfg, fitdir, data_csv = self.run_fit(tmp_path, pp=True)
        knots, _ = SampleStore.load(fitdir, names=["knots"]).get("knots")
        assert knots.shape == (9, 2)

        rec_cfg = tmp_path / "recover.ini"
        rec_cfg.write_text(
            cfg.read_text()
            + f"\n[recover]\nchain.dir = {fitdir}\nstart = 3750\nthin = 5\n"
        )
        out = tmp_path / "rec"
        assert main(["recover", "--config", str(rec_cfg), "--out", str(out),
                     "--quiet"]) == 0
        wk, _ = SampleStore.load(out, names=["w.knots"]).get("w.knots")
        assert wk.shape == (251, 9)

        holdout = tmp_path / "holdout.csv"
        rng = np.random.default_rng(5)
        lines = ["x,y,cov1"]
        for _ in range(12):
            lines.append(f"{rng.random():.6f},{rng.random():.6f},{rng.normal():.6f}")
        holdout.write_text("\n".join(lines) + "\n")
        pred_cfg = tmp_path / "pred.ini"
        pred_cfg.write_text(
            cfg.read_text()
            + f"\n[predict]\nchain.dir = {fitdir}\ncsv = {holdout}\n"
            "start = 3750\nthin = 2\nmode = via-alpha\n"
        )
        out_p = tmp_path / "pred"
        assert main(["predict", "--config", str(pred_cfg), "--out", str(out_p),
                     "--quiet"]) == 0
        y0, _ = SampleStore.load(out_p, names=["y0"]).get("y0")
        assert y0.shape == (12, 626)  # 1000 retained from 3750..5000 step 2


class TestExitCodes:
    def test_missing_config(self, tmp_path, capsys):
        assert main(["fit-full", "--config", str(tmp_path / "nope.ini"),
                     "--out", str(tmp_path / "o")]) == 2

    def test_missing_data_file(self, tmp_path):
        cfg = tmp_path / "run.ini"
        write_config(cfg, tmp_path / "absent.csv")
        assert main(["fit-full", "--config", str(cfg), "--out",
                     str(tmp_path / "o"), "--quiet"]) == 2

    def test_na_in_spatial_outcome(self, tmp_path):
        data_csv = tmp_path / "data.csv"
        write_spatial_csv(data_csv, na_cell=True)
        cfg = tmp_path / "run.ini"
        write_config(cfg, data_csv)
        assert main(["fit-full", "--config", str(cfg), "--out",
                     str(tmp_path / "o"), "--quiet"]) == 3

    def test_numerical_failure(self, tmp_path):
        # coincident coordinates + gaussian correlation + negligible nugget
        rng = np.random.default_rng(0)
        lines = ["x,y,yobs,cov1"]
        for i in range(8):
            x, y = (0.5, 0.5) if i < 2 else (rng.random(), rng.random())
            lines.append(f"{x},{y},{rng.normal():.6f},{rng.normal():.6f}")
        data_csv = tmp_path / "data.csv"
        data_csv.write_text("\n".join(lines) + "\n")
        cfg = tmp_path / "run.ini"
        cfg.write_text(
            BASE_CONFIG.format(data_csv=data_csv, n_samples=10, n_report=0)
            .replace("family = exponential", "family = gaussian")
            .replace("tau.sq = 1\nphi = 6", "tau.sq = 1e-300\nphi = 6")
        )
        assert main(["fit-full", "--config", str(cfg), "--out",
                     str(tmp_path / "o"), "--quiet"]) == 4

    def test_bad_prior_key(self, tmp_path):
        data_csv = tmp_path / "data.csv"
        write_spatial_csv(data_csv)
        cfg = tmp_path / "run.ini"
        write_config(cfg, data_csv)
        cfg.write_text(cfg.read_text().replace("phi.Unif = 3, 30", ""))
        assert main(["fit-full", "--config", str(cfg), "--out",
                     str(tmp_path / "o"), "--quiet"]) == 2


class TestDynamicCommand:
    def write_dynamic_inputs(self, tmp_path, n=28, nt=62, n_missing=117):
        rng = np.random.default_rng(99)
        coords = rng.random((n, 2))
        (tmp_path / "coords.csv").write_text(
            "x,y\n" + "\n".join(f"{c[0]:.6f},{c[1]:.6f}" for c in coords) + "\n"
        )
        y = rng.normal(size=(n, nt)) + 40.0
        mask = np.zeros((n, nt), dtype=bool)
        cells = rng.choice(n * nt, size=n_missing, replace=False)
        mask.flat[cells] = True
        # keep at least one observation per step
        for t in range(nt):
            if mask[:, t].all():
                mask[0, t] = False
        header = ",".join(f"t{j+1}" for j in range(nt))
        rows = [header]
        for i in range(n):
            rows.append(",".join(
                "NA" if mask[i, j] else f"{y[i,j]:.6f}" for j in range(nt)
            ))
        (tmp_path / "y.csv").write_text("\n".join(rows) + "\n")
        x = rng.normal(size=(n, nt))
        header = ",".join(f"temp.{j+1}" for j in range(nt))
        rows = [header]
        for i in range(n):
            rows.append(",".join(f"{x[i,j]:.6f}" for j in range(nt)))
        (tmp_path / "x.csv").write_text("\n".join(rows) + "\n")
        return int(mask.sum())

    def test_dynamic_run_banner_and_blocks(self, tmp_path, capsys):
        n_missing = self.write_dynamic_inputs(tmp_path)
        cfg = tmp_path / "dyn.ini"
        cfg.write_text(f"""
[data]
coords.csv = {tmp_path}/coords.csv
y.csv = {tmp_path}/y.csv
x.csv = {tmp_path}/x.csv
coords = x, y
covariates = temp
intercept = true

[model]
family = exponential

[priors]
beta.0.mu = 0
beta.0.sigma.diag = 100000
sigma.eta.IW.df = 2
sigma.eta.IW.scale.diag = 0.001
sigma.sq.IG = 2, 2
tau.sq.IG = 2, 1
phi.Unif = 1, 30

[starting]
beta = 0
sigma.sq = 2
tau.sq = 1
phi = 6
sigma.eta.diag = 0.01

[tuning]
phi = 0.8

[sampler]
n.samples = 4
n.report = 2
seed = 11
""")
        out = tmp_path / "dyn"
        assert main(["fit-dynamic", "--config", str(cfg), "--out",
                     str(out)]) == 0
        console = capsys.readouterr().out
        assert "Model fit with 28 observations in 62 time steps." in console
        assert f"Number of missing observations {n_missing}." in console
        assert n_missing == 117
        assert "\tsigma.sq_t=1 IG hyperpriors shape=2.00000 and scale=2.00000" in console
        assert "\tphi_t=62 Unif hyperpriors a=1.00000 and b=30.00000" in console

        theta, headers = SampleStore.load(out, names=["theta"]).get("theta")
        assert theta.shape == (4, 3 * 62)
        assert headers[:3] == ["sigma.sq.1", "tau.sq.1", "phi.1"]
        beta, bheaders = SampleStore.load(out, names=["beta"]).get("beta")
        assert beta.shape == (4, 2 * 62)
        assert bheaders[0] == "beta.(Intercept).1"
        ymiss, _ = SampleStore.load(out, names=["y.missing"]).get("y.missing")
        assert ymiss.shape == (4, 117)
        manifest = read_manifest(out)
        assert manifest["n_missing"] == 117
