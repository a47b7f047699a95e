"""Run, sweep and predict pipelines behind the command-line front end.

Every run writes into its own directory:

    mean_field.csv          t, M_1, phi_1, ..., M_s, phi_s
    conserved.csv           t, E, P, T (energy, total momentum, kinetic temperature)
    fluctuations.csv        t, Mbar_1, dM_1, ... (local average and residual)
    trapped_fraction.csv    t, n_ell, n_ell_over_N
    cohort_momenta.csv      p (cohort momenta at t_ref, band frame)
    snapshot_t=<t>.csv      q, p
    prediction.csv          t, n_ell_over_N, analytic_n_ell_over_N, analytic_n_ell_over_N0
    c_n.csv, tau.csv        coefficient table and lifetimes on the delta grid
    summary.json            RunSummary; metadata.json holds timestamps and host info

Floats are written with 17 significant digits so CSVs round-trip bit-exactly.
"""

from __future__ import annotations

import json
import logging
import math
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import equilibrium as eq
from . import fp
from .config import RunConfig, canonical_text
from .init import RNG_ALGORITHM, sample
from .integrator import IntegratorConfig, run
from .observables import (MeanFieldRecorder, SnapshotRecorder, TrappedFractionTracker,
                          autocorrelation, fluctuation_variance, gaussian_fit, local_average)

log = logging.getLogger(__name__)

FLOAT_FMT = "%.17g"


# ---------------------------------------------------------------------------
# io helpers


def write_csv(path: Path, header: list[str], columns: list[np.ndarray], int_cols=()) -> None:
    """Write columns with 17 significant digits (integers as integers)."""
    cols = [np.asarray(c) for c in columns]
    n = cols[0].size if cols else 0
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        fmts = ["%d" if i in int_cols else FLOAT_FMT for i in range(len(cols))]
        for r in range(n):
            fh.write(",".join(f % c[r] for f, c in zip(fmts, cols)) + "\n")


def read_csv(path) -> dict[str, np.ndarray]:
    """Read a CSV written by :func:`write_csv` into named float columns."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if not fh.readline().strip():
            return {h: np.empty(0) for h in header}
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {h: data[:, i] for i, h in enumerate(header)}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _nan_if_none(x):
    return math.nan if x is None else x


# ---------------------------------------------------------------------------
# single run


@dataclass
class RunSummary:
    config_hash: str
    N: int
    seed: int
    n_steps: int
    t_end: float
    energy_drift_rel: float = math.nan
    momentum_drift: float = math.nan
    xi2: list[float] = field(default_factory=list)
    xi2_N: list[float] = field(default_factory=list)
    fluct_segment: tuple[float, float] = (math.nan, math.nan)
    gaussian_p_value: float = math.nan
    beta: float = math.nan
    M_eq: float = math.nan
    M_eq_std: float = math.nan
    equilibrium_segment: tuple[float, float] = (math.nan, math.nan)
    t_ref: float = math.nan
    N0: int = 0
    N0_fraction: float = math.nan
    lam: float = math.nan
    M0: float = math.nan
    t_zero: float = math.nan
    tau_measured: dict = field(default_factory=dict)
    D: float = math.nan
    sin2_c: float = math.nan
    tau_predicted: dict = field(default_factory=dict)
    tau_predicted_canonical: dict = field(default_factory=dict)
    var_M_canonical_N: float = math.nan
    rms_prediction: float = math.nan
    wall_seconds: float = 0.0
    steps_per_second: float = math.nan


@dataclass
class RunArtifacts:
    """In-memory results of one run (also written to disk when a directory is given)."""

    cfg: RunConfig
    summary: RunSummary
    mean_field: object
    energy: np.ndarray
    momentum: np.ndarray
    temperature: np.ndarray
    fluct: object = None
    trapped: object = None
    snapshots: dict = field(default_factory=dict)
    prediction: fp.EscapePrediction | None = None
    out_dir: Path | None = None


def _tau_table(times, values, deltas):
    return {float(d): fp.tau_from_series(times, values, d) for d in deltas}


def _prediction_tau(pred: fp.EscapePrediction, deltas):
    out = {}
    for d in deltas:
        try:
            out[float(d)] = pred.tau(d)
        except ValueError:
            out[float(d)] = math.nan
    return out


def simulate(cfg: RunConfig) -> RunArtifacts:
    """Integrate one seeded trajectory with all observers attached and analyse it."""
    params, integ, obs = cfg.model, cfg.integrator, cfg.observables
    ens = sample(cfg.init, params)
    stride = integ.dt * integ.sample_every
    rec = MeanFieldRecorder(params, stride)
    hooks = [rec]
    tracker = TrappedFractionTracker(params, obs.mode, obs.t_ref, obs.lam, obs.window, obs.recenter)
    hooks.append(tracker)
    snaps = SnapshotRecorder(obs.snapshots) if obs.snapshots else None
    if snaps is not None:
        hooks.append(snaps)
    integ.check_stability(params)

    t0 = time.perf_counter()
    result = run(ens, params, integ, hooks)
    wall = time.perf_counter() - t0

    series = rec.series()
    E = np.array(rec.energy)
    P = np.array(rec.momentum)
    T = np.array(rec.temperature)
    summ = RunSummary(cfg.config_hash, params.N, cfg.init.seed, result.n_steps, float(series.times[-1]))
    summ.wall_seconds = wall
    summ.steps_per_second = result.n_steps / wall if wall > 0 and result.n_steps else math.nan
    scale = abs(E[0]) if E[0] != 0 else 1.0
    summ.energy_drift_rel = float(np.max(np.abs(E - E[0])) / scale)
    summ.momentum_drift = float(np.max(np.abs(P - P[0])))

    art = RunArtifacts(cfg, summ, series, E, P, T)
    art.snapshots = snaps.result() if snaps is not None else {}

    # equilibrium segment: last fraction of the record
    n = len(series)
    n_eq = max(1, int(round(obs.equilibrium_fraction * n)))
    seg = slice(n - n_eq, n)
    if n >= 2:
        summ.beta = eq.beta_from_run(T[seg]) if np.mean(T[seg]) > 0 else math.nan
        summ.M_eq = float(np.mean(series.M[seg, 0]))
        summ.M_eq_std = float(np.std(series.M[seg, 0]))
        summ.equilibrium_segment = (float(series.times[seg][0]), float(series.times[-1]))

    # fluctuations
    n_win = int(round(obs.window / stride))
    if n_win >= 10 and n >= max(n_win, 4):
        fl = local_average(series, obs.window)
        art.fluct = fl
        t_lo = obs.t_ref if obs.fluct_t_min is None else obs.fluct_t_min
        t_hi = math.inf if obs.fluct_t_max is None else obs.fluct_t_max
        try:
            ve = fluctuation_variance(fl, t_lo, t_hi)
        except ValueError:
            ve = None
        if ve is not None:
            summ.xi2 = [float(v) for v in ve.variance]
            summ.xi2_N = [float(v) * params.N for v in ve.variance]
            h = 0.5 * fl.window
            sel = ((fl.times >= max(t_lo, fl.times[0] + h)) & (fl.times <= min(t_hi, fl.times[-1] - h)))
            summ.fluct_segment = (float(fl.times[sel][0]), float(fl.times[sel][-1]))
            d = fl.fluct[sel, 0]
            if d.size >= 1000:
                summ.gaussian_p_value = gaussian_fit(d).p_value
            lag = min(obs.autocorr_max_lag, d.size // 4)
            if lag >= 1 and np.any(d != 0):
                fl.autocorr = [autocorrelation(fl.fluct[sel, j], lag) for j in range(params.s)]

    # trapped fraction
    tr = tracker.result()
    art.trapped = tr
    if tr is not None:
        summ.t_ref, summ.N0, summ.N0_fraction = tr.t_ref, tr.N0, tr.N0_fraction
        summ.lam, summ.M0 = tr.lam, tr.M0
        zero = np.nonzero(tr.n_ell == 0)[0]
        summ.t_zero = float(tr.times[zero[0]]) if zero.size else math.nan
        if tr.N0 > 0:
            rel = tr.n_ell / tr.N0
            summ.tau_measured = _tau_table(tr.times - tr.t_ref, rel, cfg.predict.deltas)

    if tr is not None and tr.N0 > 0 and summ.xi2 and params.s == 1 and math.isfinite(summ.beta):
        art.prediction = prediction_from_run(art)
    return art


def prediction_from_run(art: RunArtifacts, xi_source: str | None = None) -> fp.EscapePrediction:
    """Analytic escape curve for a completed run.

    ``xi_source="measured"`` takes <xi^2> from the run's fluctuation variance;
    ``"canonical"`` uses the finite-N saddle-point variance at the run's beta.
    """
    cfg, summ, tr = art.cfg, art.summary, art.trapped
    pcfg = cfg.predict
    src = xi_source or pcfg.xi_source
    k, V = float(cfg.model.k[0]), float(cfg.model.V[0])
    sol = eq.solve_self_consistency(summ.beta * V)
    if src == "measured":
        xi2 = summ.xi2[0]
    else:
        xi2 = eq.fluctuation_variance_canonical(summ.beta * V, cfg.model.N, pcfg.derivative)
    D = fp.diffusion_coefficient(k, V, max(xi2, 0.0), sol.sin2_c)
    c = fp.c_from_samples(tr.cohort_p, tr.lam, pcfg.n_max)
    pred = fp.EscapePrediction(tr.lam, D, c, tr.N0_fraction, tr.t_ref,
                               meta={"xi_source": src, "xi2": xi2, "beta": summ.beta,
                                     "sin2_c": sol.sin2_c})
    if src == pcfg.xi_source:
        summ.D = D
        summ.sin2_c = sol.sin2_c
        summ.tau_predicted = _prediction_tau(pred, pcfg.deltas)
        meas = tr.fraction
        sel = tr.times >= tr.t_ref
        if math.isfinite(summ.t_zero):
            sel &= tr.times <= summ.t_zero
        summ.rms_prediction = float(np.sqrt(np.mean((meas[sel] - pred.fraction_of_N(tr.times[sel])) ** 2)))
    try:
        var_c = eq.fluctuation_variance_canonical(summ.beta * V, cfg.model.N, pcfg.derivative)
        summ.var_M_canonical_N = var_c * cfg.model.N
        if src != "canonical":
            alt = replace(pred, D=fp.diffusion_coefficient(k, V, max(var_c, 0.0), sol.sin2_c))
            summ.tau_predicted_canonical = _prediction_tau(alt, pcfg.deltas)
    except (ValueError, ArithmeticError):
        pass
    return pred


def _versions() -> dict:
    import numba
    import scipy

    from . import __version__
    return {"hmflab": __version__, "numpy": np.__version__, "numba": numba.__version__,
            "scipy": scipy.__version__}


def write_run(art: RunArtifacts, out_dir) -> Path:
    """Emit every configured series plus summary.json and metadata.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg, summ, series = art.cfg, art.summary, art.mean_field
    want = set(cfg.series)
    s = cfg.model.s

    if "mean_field" in want:
        header = ["t"] + [f"{n}_{j + 1}" for j in range(s) for n in ("M", "phi")]
        cols = [series.times]
        for j in range(s):
            cols += [series.M[:, j], series.phi[:, j]]
        write_csv(out / "mean_field.csv", header, cols)
        write_csv(out / "conserved.csv", ["t", "E", "P", "T"],
                  [series.times, art.energy, art.momentum, art.temperature])
    if "fluctuations" in want:
        header = ["t"] + [f"{n}_{j + 1}" for j in range(s) for n in ("Mbar", "dM")]
        fl = art.fluct
        if fl is None:
            write_csv(out / "fluctuations.csv", header, [np.empty(0)] * len(header))
        else:
            cols = [fl.times]
            for j in range(s):
                cols += [fl.local_mean[:, j], fl.fluct[:, j]]
            write_csv(out / "fluctuations.csv", header, cols)
            if fl.autocorr is not None:
                lag = np.arange(fl.autocorr[0].size)
                write_csv(out / "autocorrelation.csv", ["lag"] + [f"C_{j + 1}" for j in range(s)],
                          [lag] + list(fl.autocorr), int_cols=(0,))
    if "trapped_fraction" in want:
        tr = art.trapped
        if tr is None:
            write_csv(out / "trapped_fraction.csv", ["t", "n_ell", "n_ell_over_N"], [np.empty(0)] * 3)
        else:
            write_csv(out / "trapped_fraction.csv", ["t", "n_ell", "n_ell_over_N"],
                      [tr.times, tr.n_ell, tr.fraction], int_cols=(1,))
            write_csv(out / "cohort_momenta.csv", ["p"], [tr.cohort_p])
    if "snapshots" in want:
        for t_req, (t_act, q, p) in art.snapshots.items():
            write_csv(out / f"snapshot_t={t_req:g}.csv", ["q", "p"], [q, p])
    if "prediction" in want and art.prediction is not None:
        tr = art.trapped
        write_prediction(out, art.prediction, tr.times, cfg.predict.deltas, measured=tr.fraction)

    write_json(out / "summary.json", asdict(summ))
    write_json(out / "metadata.json", {
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "host": platform.node(), "python": platform.python_version(),
        "rng": RNG_ALGORITHM, "seed": cfg.init.seed, "config_hash": cfg.config_hash,
        "config": canonical_text(cfg), "source": cfg.source_text, "versions": _versions(),
    })
    art.out_dir = out
    return out


def write_prediction(out: Path, pred: fp.EscapePrediction, times, deltas, measured=None) -> None:
    times = np.asarray(times, dtype=float)
    rel = pred.curve(times)
    if measured is None:
        write_csv(out / "prediction.csv", ["t", "analytic_n_ell_over_N", "analytic_n_ell_over_N0"],
                  [times, pred.N0_fraction * rel, rel])
    else:
        write_csv(out / "prediction.csv",
                  ["t", "n_ell_over_N", "analytic_n_ell_over_N", "analytic_n_ell_over_N0"],
                  [times, measured, pred.N0_fraction * rel, rel])
    write_csv(out / "c_n.csv", ["n", "c_n"], [np.arange(pred.c.size), pred.c], int_cols=(0,))
    taus = _prediction_tau(pred, deltas)
    one = [pred.tau_one_mode(d) for d in deltas]
    write_csv(out / "tau.csv", ["delta", "tau", "tau_one_mode"],
              [np.array(list(taus)), np.array(list(taus.values())), np.array(one)])
    write_json(out / "prediction.json", {"lam": pred.lam, "D": pred.D, "t_ref": pred.t_ref,
                                         "N0_fraction": pred.N0_fraction, "n_max": pred.n_max,
                                         "tau": taus, **pred.meta})


def cmd_run(cfg: RunConfig, out_dir=None) -> RunArtifacts:
    art = simulate(cfg)
    write_run(art, out_dir or cfg.out_dir)
    return art


# ---------------------------------------------------------------------------
# predict


def _profile_for(cfg: RunConfig, lam: float):
    """Initial momentum profile implied by the init spec, clipped to the band."""
    if cfg.init.kind == "cold_beam":
        return "delta"
    if cfg.init.kind == "waterbag" and cfg.init.dp < lam:
        return ("uniform", cfg.init.dp)
    return ("uniform", lam)


def cmd_predict(cfg: RunConfig, out_dir=None) -> fp.EscapePrediction:
    """Analytic curve either from a run directory or from explicit beta/N (or D)."""
    pc = cfg.predict
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if pc.run_dir:
        rd = Path(pc.run_dir)
        missing = [f for f in ("summary.json", "cohort_momenta.csv", "trapped_fraction.csv")
                   if not (rd / f).exists()]
        if missing:
            raise ValueError(f"run directory {rd} lacks {', '.join(missing)}")
        summ = json.loads((rd / "summary.json").read_text())
        if not summ.get("xi2") and pc.xi_source == "measured":
            raise ValueError(f"run directory {rd} has no measured fluctuation variance (xi2)")
        if summ.get("beta") is None:
            raise ValueError(f"run directory {rd} has no measured beta")
        k, V = float(cfg.model.k[0]), float(cfg.model.V[0])
        beta = summ["beta"]
        sol = eq.solve_self_consistency(beta * V)
        if pc.D is not None:
            D = pc.D
        elif pc.xi_source == "measured":
            D = fp.diffusion_coefficient(k, V, summ["xi2"][0], sol.sin2_c)
        else:
            D = fp.diffusion_coefficient(
                k, V, eq.fluctuation_variance_canonical(beta * V, summ["N"], pc.derivative), sol.sin2_c)
        lam = pc.lam or summ["lam"]
        c = fp.c_from_samples(read_csv(rd / "cohort_momenta.csv")["p"], lam, pc.n_max)
        trc = read_csv(rd / "trapped_fraction.csv")
        pred = fp.EscapePrediction(lam, D, c, summ["N0_fraction"], summ["t_ref"],
                                   meta={"run_dir": str(rd), "xi_source": pc.xi_source, "beta": beta})
        write_prediction(out, pred, trc["t"], pc.deltas, measured=trc["n_ell_over_N"])
        return pred

    N = pc.N if pc.N is not None else cfg.model.N
    beta = pc.beta
    if pc.D is None and beta is None:
        raise ValueError("predict needs either [predict] run_dir, or beta (with N), or D")
    V = float(cfg.model.V[0])
    k = float(cfg.model.k[0])
    sin2 = math.nan
    M = math.nan
    if beta is not None:
        sol = eq.solve_self_consistency(beta * V)
        sin2, M = sol.sin2_c, sol.M_c
    if pc.D is not None:
        D = pc.D
    else:
        if not M > 0:
            raise ValueError(f"beta={beta} is subcritical: no trapping band")
        var = eq.fluctuation_variance_canonical(beta * V, N, pc.derivative)
        D = fp.diffusion_coefficient(k, V, max(var, 0.0), sin2)
    if pc.lam is not None:
        lam = pc.lam
    elif M > 0:
        lam = 2.0 * math.sqrt(V * M)
    else:
        raise ValueError("predict needs [predict] lam when beta is not given")
    c = fp.c_coefficients(_profile_for(cfg, lam), lam, pc.n_max)
    t_ref = cfg.observables.t_ref
    span = 5.0 * lam * lam / D if D > 0 else max(cfg.integrator.t_end, 1.0)
    times = t_ref + np.linspace(0.0, span, 501)
    pred = fp.EscapePrediction(lam, D, c, 1.0, t_ref, meta={"beta": beta, "N": N})
    write_prediction(out, pred, times, pc.deltas)
    return pred


# ---------------------------------------------------------------------------
# sweep


@dataclass
class Fit:
    slope: float
    intercept: float
    r2: float
    residuals: list[float]
    degenerate: bool = False
    slope_stderr: float = math.nan
    intercept_stderr: float = math.nan


def linear_fit(x, y) -> Fit:
    """Least-squares y = a x + b with R^2; degenerate with fewer than 2 distinct x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(x) & np.isfinite(y)
    x, y = x[ok], y[ok]
    if np.unique(x).size < 2:
        return Fit(math.nan, math.nan, math.nan, [], degenerate=True)
    A = np.vstack([x, np.ones_like(x)]).T
    (a, b), *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - (a * x + b)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(res**2)) / ss_tot if ss_tot > 0 else math.nan
    se_a = se_b = math.nan
    if x.size > 2:
        s2 = float(np.sum(res**2)) / (x.size - 2)
        cov = s2 * np.linalg.inv(A.T @ A)
        se_a, se_b = math.sqrt(cov[0, 0]), math.sqrt(cov[1, 1])
    return Fit(float(a), float(b), r2, res.tolist(), False, se_a, se_b)


def _member(args):
    cfg, out_dir = args
    try:
        art = cmd_run(cfg, out_dir)
        return {"ok": True, "dir": str(out_dir), "summary": asdict(art.summary)}
    except Exception as exc:  # recorded, the sweep continues
        log.exception("sweep member %s failed", out_dir)
        return {"ok": False, "dir": str(out_dir), "error": f"{type(exc).__name__}: {exc}"}


def _run_members(jobs, threads: int):
    if threads <= 1 or len(jobs) <= 1:
        return [_member(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_member, jobs))


def cmd_sweep(cfg: RunConfig, out_dir=None, threads: int = 1) -> dict:
    """Scaling sweep of tau_delta over N (axis N) or over delta (axis delta)."""
    sw = cfg.sweep
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = []
    if sw.axis == "N":
        deltas = tuple(sorted(set(cfg.predict.deltas) | {sw.delta}, reverse=True))
        for N in sw.values:
            for seed in sw.seeds:
                c = cfg.with_N(int(N)).with_seed(seed)
                c = replace(c, predict=replace(c.predict, deltas=deltas))
                jobs.append((c, out / f"N={int(N)}" / f"seed={seed}"))
    else:
        deltas = tuple(sorted(set(sw.values) | set(sw.deltas), reverse=True))
        for seed in sw.seeds:
            c = cfg.with_seed(seed)
            c = replace(c, predict=replace(c.predict, deltas=deltas))
            jobs.append((c, out / f"seed={seed}"))
    results = _run_members(jobs, threads)
    failed = [r for r in results if not r["ok"]]
    good = [r["summary"] for r in results if r["ok"]]

    report = {"axis": sw.axis, "partial": bool(failed), "failures": failed,
              "members": [r["dir"] for r in results]}
    if sw.axis == "N":
        rows = []
        for N in sw.values:
            member = [s for s in good if s["N"] == int(N)]
            taus = [_nan_if_none(s["tau_measured"].get(sw.delta, s["tau_measured"].get(str(sw.delta))))
                    for s in member]
            xi = [s["xi2"][0] for s in member if s["xi2"]]
            rows.append({"N": int(N), "n_members": len(member),
                         "tau": float(np.nanmean(taus)) if taus and np.any(np.isfinite(taus)) else math.nan,
                         "tau_std": float(np.nanstd(taus)) if taus and np.any(np.isfinite(taus)) else math.nan,
                         "xi2": float(np.mean(xi)) if xi else math.nan})
        Ns = np.array([r["N"] for r in rows], dtype=float)
        tau = np.array([r["tau"] for r in rows])
        xi2 = np.array([r["xi2"] for r in rows])
        report["rows"] = rows
        report["delta"] = sw.delta
        report["fit_tau_vs_N"] = asdict(linear_fit(Ns, tau))
        ok = np.isfinite(xi2) & (xi2 > 0)
        report["fit_log_xi2_vs_log_N"] = asdict(linear_fit(np.log(Ns[ok]), np.log(xi2[ok])))
        write_csv(out / "sweep.csv", ["N", "n_members", "tau", "tau_std", "xi2"],
                  [Ns, np.array([r["n_members"] for r in rows]), tau,
                   np.array([r["tau_std"] for r in rows]), xi2], int_cols=(0, 1))
    else:
        rows = []
        for d in deltas:
            taus = []
            for s in good:
                tm = {float(k): v for k, v in s["tau_measured"].items()}
                taus.append(_nan_if_none(tm.get(float(d))))
            finite = np.isfinite(taus) if taus else np.array([], bool)
            rows.append({"delta": float(d), "n_members": int(np.sum(finite)) if taus else 0,
                         "tau": float(np.nanmean(taus)) if taus and finite.any() else math.nan})
        dv = np.array([r["delta"] for r in rows])
        tau = np.array([r["tau"] for r in rows])
        in_fit = (dv >= sw.fit_delta_min) & (dv <= sw.fit_delta_max)
        fit = linear_fit(np.log(dv[in_fit]), tau[in_fit])
        report["rows"] = rows
        report["fit_tau_vs_log_delta"] = asdict(fit)
        line = fit.slope * np.log(dv) + fit.intercept
        report["extrapolation"] = [{"delta": float(d), "tau": float(t), "line": float(l),
                                    "below_line": bool(t <= l) if math.isfinite(t) else None}
                                   for d, t, l in zip(dv, tau, line) if d < sw.fit_delta_min]
        write_csv(out / "sweep.csv", ["delta", "n_members", "tau", "affine_fit"],
                  [dv, np.array([r["n_members"] for r in rows]), tau, line], int_cols=(1,))
    write_json(out / "sweep.json", report)
    return report


# ---------------------------------------------------------------------------
# equilibrium


def cmd_equilibrium(beta: float, N: int | None = None, derivative: str = "partial") -> dict:
    sol = eq.equilibrium_solution(beta, N, derivative)
    d = asdict(sol)
    if sol.var_M is not None:
        d["var_M_times_N"] = sol.var_M * N
    return d


def worker_count(threads: int | None) -> int:
    if threads is None:
        return 1
    if threads < 1:
        return os.cpu_count() or 1
    return threads


__all__ = ["RunSummary", "RunArtifacts", "simulate", "write_run", "cmd_run", "cmd_predict",
           "cmd_sweep", "cmd_equilibrium", "linear_fit", "prediction_from_run", "read_csv",
           "write_csv", "IntegratorConfig"]
