import json
import math

import numpy as np
import pytest

from hmflab import experiments as ex
from hmflab import fp
from hmflab.cli import main
from hmflab.config import parse_config

RUN = """
[model]
N = 300
[init]
kind = waterbag
dp = 0.848
dq = 2.16
seed = 5
[integrator]
dt = 0.05
t_end = 400
sample_every = 10
[observables]
t_ref = 10
snapshots = 6, 100
"""


@pytest.fixture(scope="module")
def golden(tmp_path_factory):
    out = tmp_path_factory.mktemp("golden")
    art = ex.cmd_run(parse_config(RUN), out)
    return art, out


def test_artifacts_written(golden):
    _, out = golden
    for name in ("mean_field.csv", "conserved.csv", "fluctuations.csv", "trapped_fraction.csv",
                 "cohort_momenta.csv", "snapshot_t=6.csv", "snapshot_t=100.csv", "prediction.csv",
                 "c_n.csv", "tau.csv", "summary.json", "metadata.json"):
        assert (out / name).exists(), name
    assert (out / "mean_field.csv").read_text().splitlines()[0] == "t,M_1,phi_1"
    assert (out / "trapped_fraction.csv").read_text().splitlines()[0] == "t,n_ell,n_ell_over_N"
    assert (out / "snapshot_t=6.csv").read_text().splitlines()[0] == "q,p"
    assert len(ex.read_csv(out / "snapshot_t=6.csv")["q"]) == 300


def test_bit_faithful_round_trip(golden):
    art, out = golden
    mf = ex.read_csv(out / "mean_field.csv")
    assert mf["M_1"].tobytes() == art.mean_field.M[:, 0].tobytes()
    assert mf["phi_1"].tobytes() == art.mean_field.phi[:, 0].tobytes()


def test_summary_rederivable_from_csv(golden):
    """Independent recomputation of the summary numbers from the emitted series."""
    _, out = golden
    s = json.loads((out / "summary.json").read_text())
    cons = ex.read_csv(out / "conserved.csv")
    E, P, T, t = cons["E"], cons["P"], cons["T"], cons["t"]
    assert s["energy_drift_rel"] == pytest.approx(np.max(np.abs(E - E[0])) / abs(E[0]), rel=1e-12)
    assert s["momentum_drift"] == pytest.approx(np.max(np.abs(P - P[0])), rel=1e-12, abs=1e-300)
    lo, hi = s["equilibrium_segment"]
    sel = (t >= lo) & (t <= hi)
    assert s["beta"] == pytest.approx(1 / T[sel].mean(), rel=1e-12)
    M = ex.read_csv(out / "mean_field.csv")["M_1"]
    assert s["M_eq"] == pytest.approx(M[sel].mean(), rel=1e-12)
    fl = ex.read_csv(out / "fluctuations.csv")
    lo, hi = s["fluct_segment"]
    sel = (fl["t"] >= lo) & (fl["t"] <= hi)
    assert s["xi2"][0] == pytest.approx(np.var(fl["dM_1"][sel], ddof=1), rel=1e-12)
    assert s["xi2_N"][0] == pytest.approx(s["xi2"][0] * 300, rel=1e-12)
    tr = ex.read_csv(out / "trapped_fraction.csv")
    rel = tr["n_ell"] / tr["n_ell"][0]
    for d, tau in s["tau_measured"].items():
        ref = fp.tau_from_series(tr["t"] - tr["t"][0], rel, float(d))
        assert (tau is None and math.isnan(ref)) or tau == pytest.approx(ref, rel=1e-12)
    # analytic curve from the cohort and the measured variance
    c = fp.c_from_samples(ex.read_csv(out / "cohort_momenta.csv")["p"], s["lam"], 200)
    D = 0.5 * s["xi2"][0] * s["sin2_c"]
    assert s["D"] == pytest.approx(D, rel=1e-12)
    assert s["sin2_c"] == pytest.approx(s["beta"] ** -1, rel=1e-9)
    pred = ex.read_csv(out / "prediction.csv")
    ref = s["N0_fraction"] * fp.EscapePrediction(s["lam"], D, c, t_ref=s["t_ref"]).curve(pred["t"])
    np.testing.assert_allclose(pred["analytic_n_ell_over_N"], ref, rtol=1e-12)


def test_prediction_csv_shares_time_grid(golden):
    _, out = golden
    pred = ex.read_csv(out / "prediction.csv")
    tr = ex.read_csv(out / "trapped_fraction.csv")
    np.testing.assert_array_equal(pred["t"], tr["t"])
    np.testing.assert_array_equal(pred["n_ell_over_N"], tr["n_ell_over_N"])


def test_deterministic_csv_bodies(golden, tmp_path):
    _, out = golden
    ex.cmd_run(parse_config(RUN), tmp_path)
    for name in ("mean_field.csv", "trapped_fraction.csv", "fluctuations.csv", "snapshot_t=100.csv"):
        assert (tmp_path / name).read_bytes() == (out / name).read_bytes()


def test_zero_length_run(tmp_path):
    cfg = parse_config(RUN.replace("t_end = 400", "t_end = 0"))
    art = ex.cmd_run(cfg, tmp_path)
    assert art.summary.n_steps == 0
    assert len(ex.read_csv(tmp_path / "mean_field.csv")["t"]) == 1
    assert ex.read_csv(tmp_path / "trapped_fraction.csv")["t"].size == 0
    assert json.loads((tmp_path / "summary.json").read_text())["n_steps"] == 0


def test_predict_from_run_dir(golden, tmp_path):
    _, out = golden
    cfg = parse_config(f"[model]\nN = 300\n[predict]\nrun_dir = {out}\n")
    pred = ex.cmd_predict(cfg, tmp_path)
    s = json.loads((out / "summary.json").read_text())
    assert pred.D == pytest.approx(s["D"], rel=1e-12)
    a = ex.read_csv(tmp_path / "prediction.csv")
    b = ex.read_csv(out / "prediction.csv")
    np.testing.assert_allclose(a["analytic_n_ell_over_N"], b["analytic_n_ell_over_N"], rtol=1e-12)
    assert (tmp_path / "c_n.csv").exists() and (tmp_path / "tau.csv").exists()


def test_predict_zero_D_is_flat(tmp_path):
    cfg = parse_config("[model]\nN = 300\n[predict]\nD = 0\nbeta = 2.5\n")
    pred = ex.cmd_predict(cfg, tmp_path)
    v = ex.read_csv(tmp_path / "prediction.csv")["analytic_n_ell_over_N0"]
    assert np.all(v == v[0]) and abs(v[0] - 1) < fp.tail_bound(pred.n_max)


def test_predict_equilibrium_path(tmp_path):
    cfg = parse_config("[model]\nN = 5000\n[init]\nkind = waterbag\n[predict]\nbeta = 2.45\n")
    pred = ex.cmd_predict(cfg, tmp_path)
    assert pred.lam == pytest.approx(2 * math.sqrt(0.5684), rel=1e-3)
    assert np.all(np.isfinite(ex.read_csv(tmp_path / "tau.csv")["tau"]))


def test_predict_missing_inputs(tmp_path):
    with pytest.raises(ValueError, match="beta"):
        ex.cmd_predict(parse_config("[model]\nN = 10\n"), tmp_path)
    with pytest.raises(ValueError, match="lacks"):
        ex.cmd_predict(parse_config(f"[model]\nN = 10\n[predict]\nrun_dir = {tmp_path}\n"), tmp_path)


SWEEP = RUN.replace("t_end = 400", "t_end = 150").replace("snapshots = 6, 100", "") + """
[outputs]
series = trapped_fraction
[sweep]
axis = N
seeds = 1
delta = 0.9
"""


def test_single_point_sweep_degenerate(tmp_path):
    cfg = parse_config(SWEEP + "values = 100\n")
    rep = ex.cmd_sweep(cfg, tmp_path)
    assert rep["fit_tau_vs_N"]["degenerate"] is True
    assert (tmp_path / "sweep.json").exists()


def test_sweep_tiny_spread_completes(tmp_path):
    cfg = parse_config(SWEEP.replace("dq = 2.16", "dq = 1e-300") + "values = 100, 200\n")
    rep = ex.cmd_sweep(cfg, tmp_path)
    assert rep["axis"] == "N" and len(rep["members"]) == 2


def test_sweep_failure_flagged(tmp_path, monkeypatch):
    real = ex.cmd_run

    def flaky(cfg, out):
        if cfg.model.N == 200:
            raise RuntimeError("synthetic failure")
        return real(cfg, out)

    monkeypatch.setattr(ex, "cmd_run", flaky)
    rep = ex.cmd_sweep(parse_config(SWEEP + "values = 100, 200\n"), tmp_path)
    assert rep["partial"] is True and "synthetic failure" in rep["failures"][0]["error"]
    assert rep["fit_tau_vs_N"]["degenerate"] is True


def test_linear_fit():
    f = ex.linear_fit([1, 2, 3, 4], [2.0, 4.1, 5.9, 8.0])
    assert f.slope == pytest.approx(1.98, abs=1e-12) and 0.99 < f.r2 <= 1
    assert len(f.residuals) == 4
    assert ex.linear_fit([1, 1], [2, 3]).degenerate


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[model]\nN = 10\nfoo = 1\n")
    assert main(["run", "--config", str(bad)]) == 2
    assert "[model] unknown key 'foo'" in capsys.readouterr().err
    good = tmp_path / "good.ini"
    good.write_text(RUN.replace("t_end = 400", "t_end = 20"))
    assert main(["run", "--config", str(good), "--out", str(tmp_path / "o"), "--seed", "3"]) == 0
    assert json.loads((tmp_path / "o" / "summary.json").read_text())["seed"] == 3
    nopred = tmp_path / "np.ini"
    nopred.write_text("[model]\nN = 10\n")
    assert main(["predict", "--config", str(nopred), "--out", str(tmp_path / "p")]) == 3
    capsys.readouterr()
    assert main(["equilibrium", "--beta", "2.45", "--N", "1000"]) == 0
    eq = json.loads(capsys.readouterr().out)
    assert eq["var_M_times_N"] == pytest.approx(0.377742, abs=5e-6)
    assert main(["equilibrium", "--beta", "-1"]) == 3


def test_metadata(golden):
    _, out = golden
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["seed"] == 5 and meta["rng"] == "numpy.random.PCG64"
    assert set(meta["versions"]) == {"hmflab", "numpy", "numba", "scipy"}
    assert "[init]" in meta["config"]
