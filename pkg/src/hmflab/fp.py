"""Escape of trapped particles through momentum diffusion with absorbing walls.

The momentum profile inside the band [-lam, lam] obeys

    df/dt = D(t) d^2f/dp^2,   f(+-lam, t) = 0,

so the surviving mass fraction expands on the even cosine eigenfunctions:

    n(t)/N0 = sum_n  4 (-1)^n / ((2n+1) pi) * c_n * exp(-(2n+1)^2 pi^2 Theta(t) / (4 lam^2)),

with Theta(t) = int_0^t D, and c_n = <cos((2n+1) pi p / (2 lam))> over the
initial profile. :func:`pde_oracle` solves the same problem by Crank-Nicolson
finite differences and is the independent check of the series.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.linalg import solve_banded

log = logging.getLogger(__name__)

DEFAULT_N_MAX = 200

#: amplitude convention for the series: "corrected" normalizes to 1 at t=0,
#: "printed" keeps the 2(-1)^(n+1)/((2n+1) pi) form, which gives -1/2 of it.
PREFACTORS = ("corrected", "printed")


def diffusion_coefficient(k: float, V: float, xi_variance, sin2_avg):
    """D = (k^2 V^2 / 2) <xi^2> <sin^2(kq - phi)>; broadcasts over arrays."""
    xi = np.asarray(xi_variance, dtype=float)
    s2 = np.asarray(sin2_avg, dtype=float)
    if np.any(xi < 0) or np.any(s2 < 0) or k < 0 or V < 0:
        raise ValueError("diffusion_coefficient inputs must be non-negative")
    D = 0.5 * k * k * V * V * xi * s2
    return float(D) if D.ndim == 0 else D


def mode_numbers(n_max: int) -> np.ndarray:
    return 2 * np.arange(n_max + 1) + 1


def mode_amplitudes(n_max: int, prefactor: str = "corrected") -> np.ndarray:
    m = mode_numbers(n_max)
    sign = np.where(np.arange(n_max + 1) % 2 == 0, 1.0, -1.0)
    if prefactor == "corrected":
        return 4.0 * sign / (m * np.pi)
    if prefactor == "printed":
        return -2.0 * sign / (m * np.pi)
    raise ValueError(f"prefactor must be one of {PREFACTORS}, got {prefactor!r}")


def tail_bound(n_max: int) -> float:
    """Bound on the t=0 truncation error for profiles with |c_n| <= 2/((2n+1) pi)
    (band-filling or smoother): sum_{n > n_max} 8/((2n+1)^2 pi^2)."""
    return 4.0 / ((2 * n_max + 1) * np.pi**2)


def n_max_for_tail(eps: float) -> int:
    """Smallest truncation order whose t=0 tail bound is below `eps`."""
    return max(0, math.ceil((4.0 / (np.pi**2 * eps) - 1.0) / 2.0))


# ---------------------------------------------------------------------------
# projections of the initial profile


def c_delta(n_max: int = DEFAULT_N_MAX) -> np.ndarray:
    return np.ones(n_max + 1)


def c_uniform(width: float, lam: float, n_max: int = DEFAULT_N_MAX) -> np.ndarray:
    """Closed form for a profile uniform on [-width, width], width <= lam."""
    if not 0 < width <= lam:
        raise ValueError(f"need 0 < width <= lam, got width={width}, lam={lam}")
    a = mode_numbers(n_max) * np.pi * width / (2.0 * lam)
    return np.sin(a) / a


def c_from_samples(p, lam: float, n_max: int = DEFAULT_N_MAX) -> np.ndarray:
    """c_n for the empirical profile of momenta `p` (all within the band)."""
    p = np.asarray(p, dtype=float)
    if p.size == 0:
        raise ValueError("zero-mass profile: no samples inside the band")
    if np.any(np.abs(p) > lam):
        raise ValueError("samples outside the band [-lam, lam]")
    odd = abs(float(np.mean(np.sin(np.pi * p / lam))))
    if odd > 5.0 / math.sqrt(p.size):
        warnings.warn(f"odd component of the momentum profile dropped (first sine moment {odd:.3g})")
    w = mode_numbers(n_max) * np.pi / (2.0 * lam)
    out = np.empty(n_max + 1)
    # chunk over modes to bound memory
    step = max(1, 2_000_000 // max(p.size, 1))
    for i in range(0, n_max + 1, step):
        out[i:i + step] = np.cos(np.outer(w[i:i + step], p)).mean(axis=1)
    return out


def c_coefficients(profile, lam: float, n_max: int = DEFAULT_N_MAX) -> np.ndarray:
    """Cosine projections c_n of an initial momentum profile on [-lam, lam].

    `profile` may be ``"delta"``, ``("uniform", width)``, an array of momentum
    samples, or a callable density evaluated by oscillatory quadrature
    (relative tolerance 1e-10, absolute 1e-14 per coefficient).
    """
    if not lam > 0:
        raise ValueError(f"lam must be > 0, got {lam}")
    if isinstance(profile, str):
        if profile != "delta":
            raise ValueError(f"unknown profile {profile!r}")
        return c_delta(n_max)
    if isinstance(profile, tuple) and profile and profile[0] == "uniform":
        return c_uniform(float(profile[1]), lam, n_max)
    if callable(profile):
        return _c_quadrature(profile, lam, n_max)
    return c_from_samples(profile, lam, n_max)


def _c_quadrature(f: Callable[[float], float], lam: float, n_max: int) -> np.ndarray:
    opts = dict(epsabs=0.0, epsrel=1e-10, limit=500)
    mass = integrate.quad(f, -lam, lam, **opts)[0]
    if not mass > 0:
        raise ValueError("zero-mass profile on the band")
    odd = integrate.quad(lambda p: abs(f(p) - f(-p)), 0.0, lam, **opts)[0]
    if odd > 1e-8 * mass:
        warnings.warn(f"odd component of the momentum profile dropped (relative size {odd / mass:.3g})")
    # small high-mode coefficients are resolved to an absolute floor, not relatively
    opts["epsabs"] = 1e-14 * mass
    out = np.empty(n_max + 1)
    for n, m in enumerate(mode_numbers(n_max)):
        w = m * np.pi / (2.0 * lam)
        out[n] = integrate.quad(f, -lam, lam, weight="cos", wvar=w, **opts)[0] / mass
    return out


# ---------------------------------------------------------------------------
# series solution


def cumulative_diffusion(times, D) -> np.ndarray:
    """Theta(t) = int_{times[0]}^t D; D scalar or one value per time (trapezoid)."""
    times = np.asarray(times, dtype=float)
    if np.ndim(D) == 0:
        return float(D) * (times - (times[0] if times.size else 0.0))
    D = np.asarray(D, dtype=float)
    if D.shape != times.shape:
        raise ValueError(f"D series shape {D.shape} does not match times {times.shape}")
    theta = np.zeros_like(times)
    if times.size > 1:
        theta[1:] = np.cumsum(0.5 * (D[1:] + D[:-1]) * np.diff(times))
    return theta


def series_from_theta(c, lam: float, theta, prefactor: str = "corrected") -> np.ndarray:
    """Evaluate the eigenfunction series at cumulative diffusion values `theta`."""
    if not lam > 0:
        raise ValueError(f"lam must be > 0, got {lam}")
    c = np.asarray(c, dtype=float)
    n_max = c.size - 1
    amp = mode_amplitudes(n_max, prefactor) * c
    rates = (mode_numbers(n_max) * np.pi / (2.0 * lam)) ** 2
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    out = np.empty(theta.shape)
    step = max(1, 4_000_000 // (n_max + 1))
    flat = theta.ravel()
    res = out.ravel()
    for i in range(0, flat.size, step):
        res[i:i + step] = np.exp(-np.outer(flat[i:i + step], rates)) @ amp
    return out


def trapped_fraction_series(c, lam: float, D, times, n_max: int | None = None,
                            prefactor: str = "corrected") -> np.ndarray:
    """n(t)/N0 on `times`, measured from times[0]; D scalar or a series on `times`."""
    c = np.asarray(c, dtype=float)
    if n_max is not None:
        c = c[: n_max + 1]
    theta = cumulative_diffusion(times, D)
    return series_from_theta(c, lam, theta, prefactor)


# ---------------------------------------------------------------------------
# finite-difference oracle


def pde_oracle(profile, lam: float, D, times, n_grid: int = 1024,
               dt_max: float | None = None, startup_steps: int = 4,
               extrapolate: bool = False) -> np.ndarray:
    """Band mass fraction from a Crank-Nicolson solution with f(+-lam) = 0.

    `profile` is a callable density or an array of values on the n_grid+1
    nodes of [-lam, lam]. A callable is averaged over each node's cell
    (Gauss-Legendre on smooth cells, adaptive quadrature on cells holding a
    jump) and the mass is normalized by its quadrature over the band, so mass
    within h/2 of a wall counts as absorbed at once.
    Array input is normalized by its own trapezoid mass. `D` is a scalar or a
    callable D(t) evaluated at step midpoints. The run starts with
    `startup_steps` backward-Euler steps of size dt/16 (Rannacher smoothing)
    so discontinuous data does not excite undamped Crank-Nicolson modes.

    With ``extrapolate=True`` the solve is repeated with h/2 and dt/2 and the
    two results are Richardson-combined, cancelling the O(h^2 + dt^2) term.
    The value at times[0] is 1 by definition.
    """
    if extrapolate:
        times = np.asarray(times, dtype=float)
        if dt_max is None:
            span = times[-1] - times[0] if times.size > 1 else 0.0
            dt_max = span / 4000 if span > 0 else 1.0
        coarse = pde_oracle(profile, lam, D, times, n_grid, dt_max, startup_steps)
        fine = pde_oracle(profile, lam, D, times, 2 * n_grid, dt_max / 2, 2 * startup_steps)
        return (4.0 * fine - coarse) / 3.0
    if not lam > 0:
        raise ValueError(f"lam must be > 0, got {lam}")
    if n_grid < 256:
        raise ValueError(f"grid resolution must be >= 256, got {n_grid}")
    p = np.linspace(-lam, lam, n_grid + 1)
    h = p[1] - p[0]
    if callable(profile):
        f = _cell_averages(profile, lam, p, h)
    else:
        f = np.asarray(profile, dtype=float).copy()
    if f.shape != p.shape:
        raise ValueError(f"profile must have {p.size} grid values, got {f.shape}")
    if not np.all(np.isfinite(f)):
        raise ValueError("non-finite initial profile values")
    f[0] = f[-1] = 0.0
    u = f[1:-1]
    if callable(profile):
        mass0 = _band_mass(profile, lam)
    else:
        mass0 = h * u.sum()
    if not mass0 > 0:
        raise ValueError("zero-mass initial profile")

    D_of_t = (lambda t: float(D)) if np.ndim(D) == 0 and not callable(D) else D
    times = np.asarray(times, dtype=float)
    if dt_max is None:
        span = times[-1] - times[0] if times.size > 1 else 0.0
        dt_max = span / 4000 if span > 0 else 1.0

    m = u.size
    ab = np.zeros((3, m))
    out = np.empty(times.size)
    t = times[0] if times.size else 0.0
    n_start = startup_steps

    def lap(v):
        r = -2.0 * v
        r[1:] += v[:-1]
        r[:-1] += v[1:]
        return r / (h * h)

    def advance(u, t, dt, theta):
        d = D_of_t(t + 0.5 * dt)
        a = theta * dt * d / (h * h)
        ab[0, 1:] = -a
        ab[1, :] = 1.0 + 2.0 * a
        ab[2, :-1] = -a
        rhs = u + (1.0 - theta) * dt * d * lap(u) if theta < 1.0 else u
        return solve_banded((1, 1), ab, rhs)

    for i, target in enumerate(times):
        while t < target - 1e-14 * max(1.0, abs(target)):
            if n_start > 0:
                dt = min(dt_max / 16, target - t)
                u = advance(u, t, dt, 1.0)
                n_start -= 1
            else:
                dt = min(dt_max, target - t)
                u = advance(u, t, dt, 0.5)
            t += dt
        out[i] = h * u.sum() / mass0 if i or target > times[0] else 1.0
    return out


def _band_mass(profile, lam: float) -> float:
    return integrate.quad(profile, -lam, lam, epsabs=0.0, epsrel=1e-12, limit=500,
                          points=_kinks(profile, lam))[0]


def _cell_averages(profile, lam: float, nodes: np.ndarray, h: float) -> np.ndarray:
    """Exact averages of the density over the cells [x - h/2, x + h/2] cut to the band."""
    edges = np.clip(np.concatenate([nodes - 0.5 * h, [nodes[-1] + 0.5 * h]]), -lam, lam)
    kinks = np.array(_kinks(profile, lam) or [])
    g = lambda x: float(np.asarray(profile(np.array([x])), dtype=float)[0])
    # smooth cells use 3-point Gauss-Legendre (exact to degree 5); cells with a jump use quad
    xg, wg = np.polynomial.legendre.leggauss(3)
    a, b = edges[:-1], edges[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    pts = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    vals = np.asarray(profile(pts), dtype=float).reshape(mid.size, 3)
    cell = (vals * wg[None, :]).sum(axis=1) * half
    for x in kinks:
        j = int(np.clip(np.searchsorted(edges, x) - 1, 0, mid.size - 1))
        if b[j] > a[j]:
            cell[j] = integrate.quad(g, a[j], b[j], points=[x], epsabs=0.0, epsrel=1e-12)[0]
    return cell / h


def _kinks(profile, lam: float, n: int = 4097):
    """Jump locations of a profile, refined by bisection, as quadrature breakpoints."""
    x = np.linspace(-lam, lam, n)
    y = np.asarray(profile(x), dtype=float)
    jumps = np.nonzero(np.abs(np.diff(y)) > 1e-3 * (np.abs(y).max() + 1e-300))[0][:50]
    pts = []
    for j in jumps:
        lo, hi, ylo = x[j], x[j + 1], y[j]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            ym = float(np.asarray(profile(np.array([mid])), dtype=float)[0])
            if abs(ym - ylo) < abs(ym - y[j + 1]):
                lo = mid
            else:
                hi = mid
        pts.append(0.5 * (lo + hi))
    return pts or None


# ---------------------------------------------------------------------------
# lifetimes


def tau_delta(curve: Callable[[float], float], delta: float, t_hint: float = 1.0,
              rtol: float = 1e-8) -> float:
    """Smallest t >= 0 with curve(t) <= delta for a non-increasing curve."""
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    c0 = float(curve(0.0))
    if delta >= c0:
        raise ValueError(f"delta={delta} is not below the initial value {c0}")
    lo, hi = 0.0, max(t_hint, 1e-300)
    while curve(hi) > delta:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            raise ValueError("curve never falls below delta")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if curve(mid) > delta:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def tau_one_mode(c0: float, lam: float, D: float, delta: float) -> float:
    """Slowest-mode estimate -(4 lam^2 / (pi^2 D)) log(delta pi / (4 c0))."""
    if not D > 0:
        return math.inf
    return -(4.0 * lam * lam / (np.pi**2 * D)) * math.log(delta * np.pi / (4.0 * c0))


def tau_from_series(times, values, delta: float) -> float:
    """First time a sampled curve reaches delta (linear interpolation); nan if never."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    below = np.nonzero(values <= delta)[0]
    if below.size == 0:
        return math.nan
    j = int(below[0])
    if j == 0:
        return float(times[0])
    v0, v1 = values[j - 1], values[j]
    w = (v0 - delta) / (v0 - v1) if v0 != v1 else 1.0
    return float(times[j - 1] + w * (times[j] - times[j - 1]))


@dataclass
class EscapePrediction:
    """Analytic escape model for one cohort: band, coefficients, diffusion."""

    lam: float
    D: float
    c: np.ndarray
    N0_fraction: float = 1.0
    t_ref: float = 0.0
    prefactor: str = "corrected"
    meta: dict = field(default_factory=dict)

    @property
    def n_max(self) -> int:
        return self.c.size - 1

    def curve(self, times) -> np.ndarray:
        """n(t)/N0 at absolute times (t_ref is the origin); 1 before t_ref."""
        times = np.asarray(times, dtype=float)
        theta = self.D * np.clip(times - self.t_ref, 0.0, None)
        return series_from_theta(self.c, self.lam, theta, self.prefactor)

    def fraction_of_N(self, times) -> np.ndarray:
        return self.N0_fraction * self.curve(times)

    def tau(self, delta: float) -> float:
        """Time after t_ref at which n/N0 reaches delta."""
        if self.D <= 0:
            return math.inf
        hint = tau_one_mode(max(self.c[0], 1e-300), self.lam, self.D, min(delta, 0.5))
        hint = hint if math.isfinite(hint) and hint > 0 else 4 * self.lam**2 / self.D
        return tau_delta(lambda t: float(self.curve(self.t_ref + t)[0]), delta, t_hint=hint)

    def tau_one_mode(self, delta: float) -> float:
        return tau_one_mode(self.c[0], self.lam, self.D, delta)
