"""Measured quantities: mean-field series, fluctuation statistics, trapped fractions.

Observers follow the integrator hook protocol: ``hook(ens, mf)`` at every
sampling instant and ``hook.result()`` once the run ends.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .model import MeanFieldSample, ModelParams, ParticleEnsemble

MODES = ("momentum_band", "separatrix")


# ---------------------------------------------------------------------------
# recorders


@dataclass
class MeanFieldSeries:
    """Uniformly strided record of (M_n, phi_n); arrays are (n_samples, s)."""

    times: np.ndarray
    M: np.ndarray
    phi: np.ndarray
    stride: float

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.M = np.asarray(self.M, dtype=float).reshape(self.times.size, -1)
        self.phi = np.asarray(self.phi, dtype=float).reshape(self.times.size, -1)
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("mean-field sample times must be strictly increasing")

    def __len__(self) -> int:
        return self.times.size

    @property
    def s(self) -> int:
        return self.M.shape[1]

    def samples(self) -> list[MeanFieldSample]:
        return [MeanFieldSample(t, m, ph) for t, m, ph in zip(self.times, self.M, self.phi)]

    def segment(self, t_min: float = -math.inf, t_max: float = math.inf) -> "MeanFieldSeries":
        sel = (self.times >= t_min) & (self.times <= t_max)
        return MeanFieldSeries(self.times[sel], self.M[sel], self.phi[sel], self.stride)


class MeanFieldRecorder:
    """Records mean fields plus energy, momentum and kinetic temperature."""

    def __init__(self, params: ModelParams, stride: float):
        self.params = params
        self.stride = stride
        self.t: list[float] = []
        self.M: list[np.ndarray] = []
        self.phi: list[np.ndarray] = []
        self.energy: list[float] = []
        self.momentum: list[float] = []
        self.temperature: list[float] = []

    def __call__(self, ens: ParticleEnsemble, mf: MeanFieldSample):
        self.t.append(ens.t)
        self.M.append(mf.M)
        self.phi.append(mf.phi)
        kin = 0.5 * float(np.dot(ens.p, ens.p))
        self.energy.append(kin - 0.5 * self.params.N * float(np.sum(self.params.V_array * mf.M**2)))
        self.momentum.append(float(np.sum(ens.p)))
        self.temperature.append(float(np.var(ens.p)))

    def series(self) -> MeanFieldSeries:
        s = self.params.s
        return MeanFieldSeries(np.array(self.t), np.array(self.M).reshape(-1, s),
                               np.array(self.phi).reshape(-1, s), self.stride)

    def result(self) -> MeanFieldSeries:
        return self.series()


class SnapshotRecorder:
    """Copies (q, p) at the first sample at or after each requested time."""

    def __init__(self, times):
        self.pending = sorted(float(t) for t in times)
        self.snapshots: dict[float, tuple[float, np.ndarray, np.ndarray]] = {}

    def __call__(self, ens: ParticleEnsemble, mf: MeanFieldSample):
        while self.pending and ens.t >= self.pending[0] - 1e-9:
            self.snapshots[self.pending.pop(0)] = (ens.t, ens.q.copy(), ens.p.copy())

    def result(self):
        return self.snapshots


# ---------------------------------------------------------------------------
# fluctuation statistics


@dataclass
class GaussianFit:
    mean: float
    sigma: float
    chi2: float
    dof: int
    p_value: float
    edges: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)

    def passes(self, level: float = 0.01) -> bool:
        return bool(self.p_value > level)


@dataclass
class FluctuationStats:
    """Local mean, fluctuation and derived statistics per mode.

    ``local_mean`` and ``fluct`` are (n_samples, s) arrays on ``times``.
    """

    window: float
    stride: float
    times: np.ndarray
    local_mean: np.ndarray
    fluct: np.ndarray
    variance: np.ndarray | None = None
    histogram: list[GaussianFit] | None = None
    autocorr: list[np.ndarray] | None = None


def _as_2d(values) -> np.ndarray:
    a = np.asarray(values, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def moving_average(x: np.ndarray, half: int) -> np.ndarray:
    """Centered boxcar of 2*half+1 samples; windows shrink at the edges."""
    x = _as_2d(x)
    n = x.shape[0]
    # offset by the first sample: keeps cumulative sums small and constants exact
    ref = x[:1]
    csum = np.vstack([np.zeros((1, x.shape[1])), np.cumsum(x - ref, axis=0)])
    idx = np.arange(n)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half, n - 1) + 1
    return ref + (csum[hi] - csum[lo]) / (hi - lo)[:, None]


def local_average(series: MeanFieldSeries, window: float = 10.0) -> FluctuationStats:
    """Split each M_n into a boxcar local mean over `window` and the residual.

    The window spans round(window / stride) samples, made odd so it is centred.
    """
    stride = series.stride
    n_win = int(round(window / stride))
    if n_win < 10:
        raise ValueError(f"window {window} spans {n_win} samples; at least 10 are required")
    if len(series) < n_win:
        raise ValueError(f"series of {len(series)} samples is shorter than the window ({n_win})")
    half = n_win // 2
    mean = moving_average(series.M, half)
    return FluctuationStats(window, stride, series.times.copy(), mean, series.M - mean)


@dataclass
class VarianceEstimate:
    variance: np.ndarray
    white_noise_amplitude: np.ndarray
    n_samples: int


def fluctuation_variance(stats: FluctuationStats, t_min: float = -math.inf,
                         t_max: float = math.inf, trim: bool = True) -> VarianceEstimate:
    """Sample variance of delta M_n over [t_min, t_max].

    With `trim`, half a window at each end of the record is excluded since the
    shrinking edge windows bias the residual there. The white-noise amplitude
    is variance * stride (the delta-correlated strength the samples imply).
    """
    sel = (stats.times >= t_min) & (stats.times <= t_max)
    if trim and stats.times.size:
        h = 0.5 * stats.window
        sel &= (stats.times >= stats.times[0] + h) & (stats.times <= stats.times[-1] - h)
    d = stats.fluct[sel]
    if d.shape[0] < 2:
        raise ValueError("empty time range for the fluctuation variance")
    var = d.var(axis=0, ddof=1)
    stats.variance = var
    return VarianceEstimate(var, var * stats.stride, int(d.shape[0]))


def gaussian_fit(samples, bins="fd", min_expected: float = 5.0) -> GaussianFit:
    """Maximum-likelihood normal fit with a binned chi-square goodness test.

    Bins follow the Freedman-Diaconis rule by default; adjacent bins are merged
    until each expects at least `min_expected` counts. ``dof`` is the merged
    bin count minus 3. With fewer than 1000 samples the goodness fields are nan.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2 or np.all(x == x[0]):
        raise ValueError("degenerate sample: all values equal")
    mu = float(x.mean())
    sigma = float(np.sqrt(np.mean((x - mu) ** 2)))
    edges = np.histogram_bin_edges(x, bins=bins)
    counts, edges = np.histogram(x, bins=edges)
    if x.size < 1000:
        return GaussianFit(mu, sigma, math.nan, 0, math.nan, edges, counts)
    cdf = sps.norm.cdf(edges, mu, sigma)
    cdf[0], cdf[-1] = 0.0, 1.0
    expected = x.size * np.diff(cdf)
    obs_m, exp_m = [], []
    o_acc = e_acc = 0.0
    for o, e in zip(counts, expected):
        o_acc += o
        e_acc += e
        if e_acc >= min_expected:
            obs_m.append(o_acc)
            exp_m.append(e_acc)
            o_acc = e_acc = 0.0
    if e_acc > 0 and exp_m:
        obs_m[-1] += o_acc
        exp_m[-1] += e_acc
    obs_m, exp_m = np.array(obs_m), np.array(exp_m)
    dof = obs_m.size - 3
    if dof < 1:
        return GaussianFit(mu, sigma, math.nan, 0, math.nan, edges, counts)
    chi2 = float(np.sum((obs_m - exp_m) ** 2 / exp_m))
    return GaussianFit(mu, sigma, chi2, dof, float(sps.chi2.sf(chi2, dof)), edges, counts)


def autocorrelation(fluct, max_lag: int) -> np.ndarray:
    """Biased normalized estimator C(k) = sum d(t) d(t+k) / sum d(t)^2, k = 0..max_lag."""
    d = np.asarray(fluct, dtype=float).ravel()
    if d.size < 4 * max_lag:
        raise ValueError(f"series of {d.size} samples is too short for max_lag={max_lag}")
    denom = float(np.dot(d, d))
    if denom == 0.0:
        raise ValueError("autocorrelation of an identically zero series")
    n = d.size
    return np.array([np.dot(d[: n - k], d[k:]) / denom for k in range(max_lag + 1)])


def thin(x, every: int) -> np.ndarray:
    return np.asarray(x)[::every]


# ---------------------------------------------------------------------------
# trapped fraction


@dataclass
class TrappedFractionSeries:
    t_ref: float
    N: int
    N0: int
    mode: str
    lam: float
    M0: float
    times: np.ndarray
    n_ell: np.ndarray
    cohort_p: np.ndarray | None = field(default=None, repr=False)

    @property
    def fraction(self) -> np.ndarray:
        """n_ell / N."""
        return self.n_ell / self.N

    @property
    def N0_fraction(self) -> float:
        return self.N0 / self.N


class TrappedFractionTracker:
    """Counts cohort members that have never left the trapping region.

    The cohort is the set of particles inside the region at the first sample
    with t >= t_ref. In ``momentum_band`` mode the region is |p - u| < lam with
    lam = 2 sqrt(V_1 M0) fixed at t_ref (M0 the centred local average over
    `window`, so samples up to t_ref + window/2 are buffered before membership
    is settled), or a caller-supplied `lam`. In ``separatrix`` mode the region
    is |p - u| < 2 sqrt(V_1 M(t)) |cos((k_1 q - phi_1)/2)| with the current M(t).
    u is 0 unless `recenter`, then the finite-differenced phase velocity.
    Escapes are detected only at sampling instants.
    """

    def __init__(self, params: ModelParams, mode: str = "momentum_band", t_ref: float = 10.0,
                 lam: float | None = None, window: float = 10.0, recenter: bool = False):
        if mode not in MODES:
            raise ValueError(f"unknown tracker mode {mode!r}; expected one of {MODES}")
        if lam is not None and not lam >= 0:
            raise ValueError(f"lam must be >= 0, got {lam}")
        self.params = params
        self.mode = mode
        self.t_ref = float(t_ref)
        self.lam = lam
        self.window = float(window)
        self.recenter = recenter
        self._k = float(params.k[0])
        self._V = float(params.V[0])
        self._M_hist: list[tuple[float, float]] = []
        self._buffer: list[tuple[float, np.ndarray, np.ndarray, float, float, float]] = []
        self._last_phase: tuple[float, float] | None = None
        self.cohort: np.ndarray | None = None
        self.cohort_p: np.ndarray | None = None
        self.M0 = math.nan
        self.t_start = math.nan
        self.times: list[float] = []
        self.n_ell: list[int] = []

    # velocity of the wave frame
    def _frame_velocity(self, t: float, phi: float) -> float:
        u = 0.0
        if self.recenter and self._last_phase is not None:
            t0, phi0 = self._last_phase
            dphi = (phi - phi0 + np.pi) % (2 * np.pi) - np.pi
            if t > t0:
                u = dphi / (t - t0) / self._k
        self._last_phase = (t, phi)
        return u

    def _inside(self, q, p, M, phi, u):
        if self.mode == "momentum_band":
            return np.abs(p - u) < self.lam
        half_width = 2.0 * math.sqrt(self._V * M) * np.abs(np.cos(0.5 * (self._k * q - phi)))
        return np.abs(p - u) < half_width

    def __call__(self, ens: ParticleEnsemble, mf: MeanFieldSample):
        t = ens.t
        M = float(mf.M[0])
        phi = float(mf.phi[0])
        u = self._frame_velocity(t, phi)
        if self.cohort is None:
            self._M_hist.append((t, M))
            if t < self.t_ref - 1e-9:
                return
            self._buffer.append((t, ens.q.copy(), ens.p.copy(), M, phi, u))
            t0 = self._buffer[0][0]
            if self.mode == "momentum_band" and self.lam is None and t < t0 + 0.5 * self.window - 1e-9:
                return
            self._settle()
            return
        self._update(t, ens.q, ens.p, M, phi, u)

    def _settle(self):
        t0, q0, p0, M_at, phi0, u0 = self._buffer[0]
        self.t_start = t0
        if self.mode == "momentum_band":
            h = 0.5 * self.window
            Ms = [m for (tt, m) in self._M_hist if t0 - h - 1e-9 <= tt <= t0 + h + 1e-9]
            self.M0 = float(np.mean(Ms))
            if self.M0 < 1e-6:
                raise ValueError(f"local mean field M0={self.M0:.3g} at t_ref is vanishing; "
                                 "the trapping region is undefined")
            if self.lam is None:
                self.lam = 2.0 * math.sqrt(self._V * self.M0)
        else:
            self.M0 = M_at
            if self.M0 < 1e-6:
                raise ValueError(f"mean field M={self.M0:.3g} at t_ref is vanishing; "
                                 "the separatrix is undefined")
            self.lam = 2.0 * math.sqrt(self._V * self.M0)
        self.cohort = self._inside(q0, p0, M_at, phi0, u0)
        self.cohort_p = (p0 - u0)[self.cohort].copy()
        self.times.append(t0)
        self.n_ell.append(int(self.cohort.sum()))
        for (t, q, p, M, phi, u) in self._buffer[1:]:
            self._update(t, q, p, M, phi, u)
        self._buffer = []
        self._M_hist = []

    def _update(self, t, q, p, M, phi, u):
        self.cohort &= self._inside(q, p, M, phi, u)
        self.times.append(t)
        self.n_ell.append(int(self.cohort.sum()))

    def result(self) -> TrappedFractionSeries | None:
        if self.cohort is None and self._buffer:
            self._settle()
        if self.cohort is None:
            return None
        return TrappedFractionSeries(self.t_start, self.params.N, self.n_ell[0], self.mode,
                                     float(self.lam), self.M0, np.array(self.times),
                                     np.array(self.n_ell), self.cohort_p)
