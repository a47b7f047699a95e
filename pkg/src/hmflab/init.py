"""Seeded initial conditions: waterbag, cold (monokinetic) beam, thermal, arrays.

All samplers draw from ``numpy.random.Generator(PCG64(seed))``; the algorithm
identifier is exposed as :data:`RNG_ALGORITHM` for run metadata.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ModelParams, ParticleEnsemble, compute_mean_fields

RNG_ALGORITHM = "numpy.random.PCG64"

KINDS = ("waterbag", "cold_beam", "thermal", "custom_arrays")


@dataclass(frozen=True)
class InitSpec:
    kind: str = "waterbag"
    dp: float = 0.848
    dq: float = 2.16
    U: float = 0.5
    seed: int = 0
    stratified: bool = False
    # thermal only
    beta: float = 0.0
    # custom_arrays only
    q: np.ndarray | None = field(default=None, repr=False, compare=False)
    p: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown initial condition kind {self.kind!r}; expected one of {KINDS}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {self.seed}")


def validate(spec: InitSpec, params: ModelParams) -> None:
    """Raise ValueError if ``spec`` cannot be sampled for ``params``."""
    if spec.kind == "waterbag":
        if not spec.dp > 0:
            raise ValueError(f"waterbag needs dp > 0, got {spec.dp}")
        if not 0 < spec.dq <= params.L / 2:
            raise ValueError(f"waterbag needs 0 < dq <= L/2 = {params.L / 2:g}, got {spec.dq}")
    elif spec.kind == "cold_beam":
        if not spec.U > 0:
            raise ValueError(f"cold beam needs U > 0, got {spec.U}")
    elif spec.kind == "thermal":
        if not spec.beta > 0:
            raise ValueError(f"thermal start needs beta > 0, got {spec.beta}")
        if params.s != 1:
            raise ValueError("thermal start is defined for a single resonance only")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def sample_waterbag(spec: InitSpec, params: ModelParams) -> ParticleEnsemble:
    """Uniform density on [-dq, dq] x [-dp, dp], positions wrapped onto [0, L).

    With ``stratified=True`` positions are placed on the midpoints of N equal
    cells (no randomness in q); only meant for the zero-mean-field check.
    """
    validate(spec, params)
    rng = make_rng(spec.seed)
    N = params.N
    if spec.stratified:
        q = -spec.dq + (np.arange(N) + 0.5) * (2 * spec.dq / N)
    else:
        q = rng.uniform(-spec.dq, spec.dq, N)
    p = rng.uniform(-spec.dp, spec.dp, N)
    return ParticleEnsemble(q, p, 0.0).wrap(params.L)


def sample_cold_beam(spec: InitSpec, params: ModelParams) -> ParticleEnsemble:
    """Uniform positions on the circle, every particle with the same momentum p0.

    p0 > 0 is fixed so that the energy per particle of the realized
    configuration is exactly ``spec.U``.
    """
    validate(spec, params)
    rng = make_rng(spec.seed)
    q = rng.uniform(0.0, params.L, params.N)
    ens = ParticleEnsemble(q, np.zeros(params.N), 0.0).wrap(params.L)
    mf = compute_mean_fields(ens, params)
    pot_per_particle = -0.5 * float(np.sum(params.V_array * mf.M**2))
    kin = spec.U - pot_per_particle
    if kin < 0:
        raise ValueError(
            f"U={spec.U} is below the potential energy per particle {pot_per_particle:.6g} "
            "of the sampled positions"
        )
    ens.p[:] = np.sqrt(2.0 * kin)
    return ens


def sample_thermal(spec: InitSpec, params: ModelParams) -> ParticleEnsemble:
    """Canonical-like start for s=1: von Mises positions, Gaussian momenta.

    Positions follow exp(beta V M_c cos(k q)) with M_c the canonical
    magnetization at ``spec.beta``; momenta have variance 1/beta. Used to
    reach equilibrium quickly in tests rather than to model the experiments.
    """
    from .equilibrium import solve_self_consistency

    validate(spec, params)
    rng = make_rng(spec.seed)
    sol = solve_self_consistency(spec.beta * params.V[0])
    kappa = sol.v_star
    k = params.k[0]
    q = rng.vonmises(0.0, kappa, params.N) / k if kappa > 0 else rng.uniform(0.0, params.L, params.N)
    p = rng.normal(0.0, 1.0 / np.sqrt(spec.beta), params.N)
    return ParticleEnsemble(q, p, 0.0).wrap(params.L)


def sample(spec: InitSpec, params: ModelParams) -> ParticleEnsemble:
    """Dispatch on ``spec.kind``."""
    if spec.kind == "waterbag":
        return sample_waterbag(spec, params)
    if spec.kind == "cold_beam":
        return sample_cold_beam(spec, params)
    if spec.kind == "thermal":
        return sample_thermal(spec, params)
    if spec.q is None or spec.p is None:
        raise ValueError("custom_arrays needs both q and p")
    return ParticleEnsemble(np.array(spec.q, dtype=float), np.array(spec.p, dtype=float)).wrap(params.L)
