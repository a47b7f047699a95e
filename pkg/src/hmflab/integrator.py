"""Symplectic time stepping of the mean-field flow.

Each force evaluation recomputes the mean fields from the current positions,
so self-consistency holds at every kick. One leapfrog step costs a single
O(N s) force call (the closing kick of one step is reused as the opening kick
of the next inside a compiled chunk).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numba
import numpy as np

from .model import (
    MeanFieldSample,
    ModelParams,
    ParticleEnsemble,
    _accelerations,
    _force_eval,
    _mean_field_sums,
    compute_mean_fields,
)

log = logging.getLogger(__name__)

SCHEMES = ("leapfrog2", "yoshida4")

_CBRT2 = 2.0 ** (1.0 / 3.0)
_YOSHIDA = (1.0 / (2.0 - _CBRT2), -_CBRT2 / (2.0 - _CBRT2), 1.0 / (2.0 - _CBRT2))


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 0.05
    t_end: float = 0.0
    sample_every: int = 10
    scheme: str = "leapfrog2"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.sample_every < 1:
            raise ValueError(f"sample_every must be >= 1, got {self.sample_every}")
        if self.t_end < 0:
            raise ValueError(f"t_end must be >= 0, got {self.t_end}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def check_stability(self, params: ModelParams) -> bool:
        """Warn when dt * max k_n * sqrt(max V_n) >= 0.5; never raises."""
        g = self.dt * float(np.max(params.k)) * math.sqrt(float(np.max(np.abs(params.V_array))))
        if g >= 0.5:
            log.warning("dt=%g exceeds the stability guard (%.3f >= 0.5)", self.dt, g)
            return False
        return True


class HookError(RuntimeError):
    """An observer raised; carries the step index and time of the failure."""

    def __init__(self, step: int, t: float, hook, cause: BaseException):
        super().__init__(f"observer {hook!r} failed at step {step} (t={t:g}): {cause!r}")
        self.step = step
        self.t = t


# ---------------------------------------------------------------------------
# compiled kernels


@numba.njit(cache=True)
def _drift(q, p, h, L):
    for i in range(q.size):
        x = q[i] + p[i] * h
        if x >= L:
            x -= L
        elif x < 0.0:
            x += L
        if x < 0.0 or x >= L:
            x = x - L * np.floor(x / L)
            if x >= L:
                x -= L
        q[i] = x


@numba.njit(cache=True)
def _kick(p, a, h):
    for i in range(p.size):
        p[i] += a[i] * h


@numba.njit(cache=True)
def _leapfrog_chunk(q, p, k, V, L, dt, n_steps, a):
    """n_steps kick-drift-kick steps; `a` holds forces at entry and at exit."""
    half = 0.5 * dt
    C = np.empty((k.size, q.size))
    S = np.empty((k.size, q.size))
    for _ in range(n_steps):
        _kick(p, a, half)
        _drift(q, p, dt, L)
        _force_eval(q, k, V, a, C, S)
        _kick(p, a, half)


@numba.njit(cache=True)
def _yoshida_chunk(q, p, k, V, L, dt, n_steps, a, w):
    C = np.empty((k.size, q.size))
    S = np.empty((k.size, q.size))
    for _ in range(n_steps):
        for j in range(3):
            h = w[j] * dt
            _kick(p, a, 0.5 * h)
            _drift(q, p, h, L)
            _force_eval(q, k, V, a, C, S)
            _kick(p, a, 0.5 * h)


def _initial_forces(ens: ParticleEnsemble, params: ModelParams) -> np.ndarray:
    cx, cy = _mean_field_sums(ens.q, params.k)
    return _accelerations(ens.q, params.k, params.V_array, cx, cy, np.empty(ens.N))


def _check_finite(ens: ParticleEnsemble, step: int):
    bad = ~(np.isfinite(ens.q) & np.isfinite(ens.p))
    if bad.any():
        i = int(np.argmax(bad))
        raise FloatingPointError(
            f"non-finite state for particle {i} at step {step} (q={ens.q[i]}, p={ens.p[i]})"
        )


def advance(ens: ParticleEnsemble, params: ModelParams, dt: float, n_steps: int,
            scheme: str = "leapfrog2", forces: np.ndarray | None = None) -> ParticleEnsemble:
    """Advance `ens` in place by n_steps of size dt (dt may be negative).

    `forces`, if given, must hold the accelerations of the current positions;
    it is updated in place to those of the final positions.
    """
    if n_steps <= 0:
        return ens
    a = _initial_forces(ens, params) if forces is None else forces
    if scheme == "leapfrog2":
        _leapfrog_chunk(ens.q, ens.p, params.k, params.V_array, params.L, dt, n_steps, a)
    elif scheme == "yoshida4":
        _yoshida_chunk(ens.q, ens.p, params.k, params.V_array, params.L, dt, n_steps, a,
                       np.array(_YOSHIDA))
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    ens.t += n_steps * dt
    return ens


def step(ens: ParticleEnsemble, params: ModelParams, cfg: IntegratorConfig) -> ParticleEnsemble:
    """Return a new ensemble advanced by one step of ``cfg.scheme``."""
    out = advance(ens.copy(), params, cfg.dt, 1, cfg.scheme)
    _check_finite(out, 1)
    return out


Observer = Callable[[ParticleEnsemble, MeanFieldSample], None]


@dataclass
class RunResult:
    final: ParticleEnsemble
    outputs: list
    n_steps: int
    n_samples: int


def _readonly_view(ens: ParticleEnsemble) -> ParticleEnsemble:
    q = ens.q.view()
    p = ens.p.view()
    q.flags.writeable = False
    p.flags.writeable = False
    view = ParticleEnsemble.__new__(ParticleEnsemble)
    view.q, view.p, view.t = q, p, ens.t
    return view


def run(ens: ParticleEnsemble, params: ModelParams, cfg: IntegratorConfig,
        hooks: Sequence[Observer] | Iterable[Observer] = ()) -> RunResult:
    """Integrate to ``cfg.t_end``, calling every hook at t=0 and each stride.

    Hooks receive a read-only view of the state and the current mean fields.
    The input ensemble is not modified. Each hook's ``result()`` (when it has
    one) is collected into ``RunResult.outputs``.
    """
    hooks = list(hooks)
    cfg.check_stability(params)
    state = ens.copy()
    n_total = cfg.n_steps
    t0 = state.t
    done = 0
    n_samples = 0

    def notify():
        nonlocal n_samples
        if not hooks:
            return
        mf = compute_mean_fields(state, params)
        view = _readonly_view(state)
        for hook in hooks:
            try:
                hook(view, mf)
            except Exception as exc:
                raise HookError(done, state.t, hook, exc) from exc
        n_samples += 1

    _check_finite(state, 0)
    notify()
    forces = _initial_forces(state, params)
    while done < n_total:
        chunk = min(cfg.sample_every, n_total - done)
        advance(state, params, cfg.dt, chunk, cfg.scheme, forces)
        done += chunk
        # clock from the step count, so long runs do not accumulate dt round-off
        state.t = t0 + done * cfg.dt
        _check_finite(state, done)
        if done % cfg.sample_every == 0:
            notify()
    outputs = [getattr(h, "result", lambda: None)() for h in hooks]
    return RunResult(state, outputs, done, n_samples)
