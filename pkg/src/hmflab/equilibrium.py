"""Canonical reference values for the single-resonance (HMF) model.

With psi(v) = v^2 / (2 beta) - log I0(v), the canonical magnetization is
M_c = v*/beta where v* is the largest root of psi'(v) = v/beta - I1(v)/I0(v).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy.optimize import brentq

# Below this argument the power series is used, above it the Hankel expansion.
BESSEL_CROSSOVER = 30.0


# ---------------------------------------------------------------------------
# modified Bessel functions of the first kind, orders 0 and 1


def _series_scaled(order: int, x: float) -> float:
    """exp(-x) * I_order(x) from the ascending series (all terms positive)."""
    half = 0.5 * x
    term = 1.0 if order == 0 else half
    total = term
    q = half * half
    k = 0
    while True:
        k += 1
        term *= q / (k * (k + order))
        total += term
        if term <= 1e-17 * total:
            break
    return total * math.exp(-x)


def _asymptotic_scaled(order: int, x: float) -> float:
    """exp(-x) * I_order(x) from the large-argument expansion, truncated
    before its terms start growing."""
    mu = 4.0 * order * order
    term = 1.0
    total = 1.0
    k = 0
    while True:
        k += 1
        nxt = -term * (mu - (2 * k - 1) ** 2) / (8.0 * k * x)
        if abs(nxt) > abs(term):
            break
        total += nxt
        term = nxt
        if abs(term) < 1e-17 * abs(total):
            break
    return total / math.sqrt(2.0 * math.pi * x)


def bessel_ie(order: int, x: float) -> float:
    """Exponentially scaled exp(-x) I_order(x) for x >= 0, order in {0, 1}."""
    if order not in (0, 1):
        raise ValueError(f"only orders 0 and 1 are provided, got {order}")
    if x < 0:
        raise ValueError(f"x must be >= 0, got {x}")
    if x == 0.0:
        return 1.0 if order == 0 else 0.0
    if x < BESSEL_CROSSOVER:
        return _series_scaled(order, x)
    return _asymptotic_scaled(order, x)


def bessel_I(order: int, x):
    """Modified Bessel function I_0 or I_1; accepts scalars or arrays.

    Relative error below 1e-12 on [0, 100].
    """
    if np.ndim(x) == 0:
        xf = float(x)
        return bessel_ie(order, xf) * math.exp(xf)
    return np.array([bessel_I(order, float(v)) for v in np.ravel(x)]).reshape(np.shape(x))


def bessel_ratio(x: float) -> float:
    """I1(x) / I0(x), overflow-free for any x >= 0."""
    if x == 0.0:
        return 0.0
    return bessel_ie(1, x) / bessel_ie(0, x)


def sin2_from_v(v: float) -> float:
    """<sin^2 q> under exp(v cos q): I1(v) / (v I0(v)), with limit 1/2 at v = 0."""
    if v < 1e-4:
        # series of I1/(v I0) = 1/2 - v^2/16 + v^4/96 - ...
        z = v * v
        return 0.5 - z / 16.0 + z * z / 96.0
    return bessel_ratio(v) / v


def _ratio_prime(v: float, r: float) -> float:
    """d/dv I1/I0 = 1 - r/v - r^2 (limit 1/2 at 0)."""
    if v < 1e-4:
        return 0.5 - 3.0 * v * v / 16.0
    return 1.0 - r / v - r * r


def _ratio_second(v: float, r: float, rp: float) -> float:
    if v < 1e-4:
        return -3.0 * v / 8.0
    return -rp / v + r / (v * v) - 2.0 * r * rp


def psi(v: float, beta: float) -> float:
    """v^2 / (2 beta) - log I0(v), evaluated without overflow."""
    return v * v / (2.0 * beta) - (math.log(bessel_ie(0, v)) + v)


def psi_prime(v: float, beta: float) -> float:
    return v / beta - bessel_ratio(v)


def psi_second(v: float, beta: float) -> float:
    return 1.0 / beta - _ratio_prime(v, bessel_ratio(v))


# ---------------------------------------------------------------------------
# self-consistency


@dataclass(frozen=True)
class EquilibriumSolution:
    beta: float
    v_star: float
    M_c: float
    sin2_c: float
    var_M: float | None = None
    N: int | None = None


_V_PROBE = 1e-7


def solve_self_consistency(beta: float) -> EquilibriumSolution:
    """Largest root v* >= 0 of v/beta = I1(v)/I0(v).

    The nonzero branch is detected numerically: a sign change of
    I1/I0 - v/beta between a tiny probe and v = beta (where I1/I0 < 1 makes it
    negative). Without one the uniform branch v* = 0 is returned.
    """
    if not beta > 0:
        raise ValueError(f"beta must be > 0, got {beta}")

    def g(v):
        return bessel_ratio(v) - v / beta

    v_star = 0.0
    lo, hi = _V_PROBE, beta
    if hi > lo and g(lo) > 0.0:
        v_star = brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
        # polish with Newton on psi'
        for _ in range(3):
            d = psi_second(v_star, beta)
            if d <= 0:
                break
            v_star -= psi_prime(v_star, beta) / d
    return EquilibriumSolution(beta, v_star, v_star / beta, sin2_from_v(v_star))


# ---------------------------------------------------------------------------
# finite-N canonical fluctuation variance


def _log_prefactor(v: float, beta: float) -> float:
    """N-independent part of log[(v/beta) sqrt(2 pi N / psi'') exp(-N psi)]."""
    return math.log(v / beta) - 0.5 * math.log(psi_second(v, beta))


def fluctuation_variance_canonical(beta: float, N: int, derivative: str = "partial",
                                   check: bool = True) -> float:
    """Saddle-point estimate of the canonical variance of M at finite N.

    Evaluates (2/N) d/dbeta log[(v*/beta) sqrt(2 pi N / psi''(v*)) e^{-N psi(v*)}]
    - v*^2/beta^2. The -N psi term contributes exactly v*^2/beta^2 (psi' vanishes
    at v*), which cancels the subtracted mean, so the result is

        partial: (1/N) (1/(beta^2 psi'') - 2/beta)      # v* held fixed
        total:   partial + (2/N) (dv*/dbeta) d/dv[log v - log psi''/2]

    ``derivative="partial"`` (default) differentiates at fixed v*;
    ``"total"`` follows v*(beta) through implicit differentiation. A
    non-positive result (the partial reading above beta of about 2.8) raises
    ArithmeticError. With ``check=True`` a centred finite difference in beta
    (step 1e-6 beta) must agree to relative 1e-6.
    """
    if derivative not in ("partial", "total"):
        raise ValueError(f"derivative must be 'partial' or 'total', got {derivative!r}")
    sol = solve_self_consistency(beta)
    v = sol.v_star
    if v <= 0.0:
        raise ValueError(f"vanishing mean field excluded: beta={beta} is subcritical")
    r = bessel_ratio(v)
    rp = _ratio_prime(v, r)
    rpp = _ratio_second(v, r, rp)
    d2 = 1.0 / beta - rp
    dG = -1.0 / beta + 0.5 / (beta * beta * d2)
    if derivative == "total":
        dv_dbeta = v / (beta * beta * d2)
        dG += dv_dbeta * (1.0 / v + 0.5 * rpp / d2)
    var = 2.0 * dG / N
    if not var > 0.0:
        raise ArithmeticError(
            f"saddle-point variance ({derivative} derivative) is {var:.6g} <= 0 at beta={beta}; "
            "the estimate is not usable there")

    if check:
        h = 1e-6 * beta
        if derivative == "total":
            vp = solve_self_consistency(beta + h).v_star
            vm = solve_self_consistency(beta - h).v_star
        else:
            vp = vm = v
        fd = 2.0 * (_log_prefactor(vp, beta + h) - _log_prefactor(vm, beta - h)) / (2 * h) / N
        if not math.isclose(fd, var, rel_tol=1e-6):
            raise ArithmeticError(f"finite-difference check failed: analytic {var!r} vs {fd!r}")
    return var


def equilibrium_solution(beta: float, N: int | None = None,
                         derivative: str = "partial") -> EquilibriumSolution:
    """Self-consistent solution plus, when N is given and beta supercritical,
    the finite-N variance."""
    sol = solve_self_consistency(beta)
    var = None
    if N is not None and sol.v_star > 0:
        var = fluctuation_variance_canonical(beta, N, derivative)
    return EquilibriumSolution(sol.beta, sol.v_star, sol.M_c, sol.sin2_c, var, N)


def beta_from_run(temperatures) -> float:
    """Inverse of the time-averaged kinetic temperature of an equilibrated segment."""
    T = np.asarray(temperatures, dtype=float)
    if T.size == 0:
        raise ValueError("empty temperature segment")
    mean = float(T.mean())
    if not mean > 0:
        raise ValueError(f"mean kinetic temperature must be positive, got {mean}")
    return 1.0 / mean


def beta_critical_bisect(lo: float = 1.0, hi: float = 3.0, tol: float = 1e-7,
                         m_floor: float = 0.0) -> float:
    """Bisect on beta for the onset of the nonzero-magnetization branch."""
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if solve_self_consistency(mid).M_c > m_floor:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Metropolis sampling of the configurational canonical measure


@numba.njit(cache=True)
def _metropolis(q, beta, n_sweeps, step, burn, seed):
    np.random.seed(seed)
    N = q.size
    cx = 0.0
    cy = 0.0
    for j in range(N):
        cx += np.cos(q[j])
        cy += np.sin(q[j])
    out = np.empty(n_sweeps)
    accepted = 0
    for sweep in range(burn + n_sweeps):
        for _ in range(N):
            i = np.random.randint(N)
            new = q[i] + step * (2.0 * np.random.random() - 1.0)
            dcx = np.cos(new) - np.cos(q[i])
            dcy = np.sin(new) - np.sin(q[i])
            nx = cx + dcx
            ny = cy + dcy
            # energy -(N/2) M^2 = -(cx^2 + cy^2) / (2N)
            dE = -((nx * nx + ny * ny) - (cx * cx + cy * cy)) / (2.0 * N)
            if dE <= 0.0 or np.random.random() < np.exp(-beta * dE):
                q[i] = new
                cx = nx
                cy = ny
                accepted += 1
        # resynchronise the running sums once per sweep
        cx = 0.0
        cy = 0.0
        for j in range(N):
            cx += np.cos(q[j])
            cy += np.sin(q[j])
        if sweep >= burn:
            out[sweep - burn] = math.sqrt(cx * cx + cy * cy) / N
    return out, accepted / ((burn + n_sweeps) * N)


def metropolis_magnetization(beta: float, N: int, n_sweeps: int = 20000, burn: int = 2000,
                             step: float = 1.0, seed: int = 0) -> tuple[np.ndarray, float]:
    """Per-sweep M samples from exp(beta N M^2 / 2) over positions, and the
    acceptance rate. Starts from the canonical von Mises profile."""
    sol = solve_self_consistency(beta)
    rng = np.random.Generator(np.random.PCG64(seed))
    q = rng.vonmises(0.0, sol.v_star, N) if sol.v_star > 0 else rng.uniform(0, 2 * np.pi, N)
    return _metropolis(q.astype(np.float64), float(beta), n_sweeps, float(step), burn, seed % (2**32))
