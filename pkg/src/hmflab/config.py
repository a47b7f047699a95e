"""Run configuration: an INI-style file with fixed sections and keys.

Unknown sections or keys are rejected so typos fail fast. See README.md for
the full schema.
"""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .init import KINDS, InitSpec, validate
from .integrator import SCHEMES, IntegratorConfig
from .model import ModelParams
from .observables import MODES


class ConfigError(ValueError):
    """Invalid configuration; the message names the section and key."""


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(",", " ").split())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text: str) -> float | None:
    t = text.strip().lower()
    return None if t in ("", "none") else float(t)


@dataclass(frozen=True)
class ObservablesConfig:
    mode: str = "momentum_band"
    t_ref: float = 10.0
    window: float = 10.0
    recenter: bool = False
    lam: float | None = None
    snapshots: tuple[float, ...] = ()
    # last fraction of the run treated as equilibrated (beta, M_eq)
    equilibrium_fraction: float = 0.25
    # segment used for the fluctuation variance; defaults to [t_ref, t_end]
    fluct_t_min: float | None = None
    fluct_t_max: float | None = None
    autocorr_max_lag: int = 40


@dataclass(frozen=True)
class PredictConfig:
    deltas: tuple[float, ...] = (0.5, 0.2, 0.1, 0.05, 0.02, 0.01, 0.001)
    n_max: int = 200
    # "measured" (from the run's fluctuations) or "canonical" (saddle-point value)
    xi_source: str = "measured"
    derivative: str = "partial"
    beta: float | None = None
    N: int | None = None
    D: float | None = None
    lam: float | None = None
    run_dir: str | None = None


@dataclass(frozen=True)
class SweepConfig:
    axis: str = "N"
    values: tuple[float, ...] = (500, 1000, 2000, 4000)
    seeds: tuple[int, ...] = (1,)
    delta: float = 0.05
    deltas: tuple[float, ...] = (0.5, 0.3, 0.2, 0.1, 0.05, 0.02, 0.01, 0.001)
    # with axis = N, t_end = t_end_per_N * N (0 keeps integrator.t_end)
    t_end_per_N: float = 0.0
    fit_delta_min: float = 0.01
    fit_delta_max: float = 0.5


@dataclass(frozen=True)
class RunConfig:
    model: ModelParams
    init: InitSpec
    integrator: IntegratorConfig
    observables: ObservablesConfig = field(default_factory=ObservablesConfig)
    predict: PredictConfig = field(default_factory=PredictConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    out_dir: str = "out"
    series: tuple[str, ...] = ("mean_field", "trapped_fraction", "fluctuations", "snapshots",
                               "prediction")
    source_text: str = field(default="", compare=False, repr=False)

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(canonical_text(self).encode()).hexdigest()[:16]

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, init=replace(self.init, seed=seed))

    def with_N(self, N: int) -> "RunConfig":
        cfg = replace(self, model=replace(self.model, N=int(N)))
        if self.sweep.t_end_per_N > 0:
            cfg = replace(cfg, integrator=replace(self.integrator, t_end=self.sweep.t_end_per_N * N))
        return cfg


SERIES = ("mean_field", "trapped_fraction", "fluctuations", "snapshots", "prediction")

# section -> key -> parser
_SCHEMA = {
    "model": {"N": int, "L": float, "s": int, "V": _floats},
    "init": {"kind": str, "dp": float, "dq": float, "U": float, "seed": int, "stratified": _bool,
             "beta": float},
    "integrator": {"dt": float, "t_end": float, "sample_every": int, "scheme": str},
    "observables": {"mode": str, "t_ref": float, "window": float, "recenter": _bool,
                    "lam": _opt_float, "snapshots": _floats, "equilibrium_fraction": float,
                    "fluct_t_min": _opt_float, "fluct_t_max": _opt_float,
                    "autocorr_max_lag": int},
    "outputs": {"directory": str, "series": lambda t: tuple(x for x in t.replace(",", " ").split())},
    "predict": {"deltas": _floats, "n_max": int, "xi_source": str, "derivative": str,
                "beta": _opt_float, "N": lambda t: None if t.strip().lower() in ("", "none") else int(t),
                "D": _opt_float, "lam": _opt_float, "run_dir": str},
    "sweep": {"axis": str, "values": _floats, "seeds": _ints, "delta": float, "deltas": _floats,
              "t_end_per_N": float, "fit_delta_min": float, "fit_delta_max": float},
}


def _parse_section(cp: configparser.ConfigParser, name: str) -> dict:
    out = {}
    if not cp.has_section(name):
        return out
    for key, raw in cp.items(name):
        parser = _SCHEMA[name].get(key)
        if parser is None:
            raise ConfigError(f"[{name}] unknown key {key!r}; allowed: {sorted(_SCHEMA[name])}")
        try:
            out[key] = parser(raw)
        except ValueError as exc:
            raise ConfigError(f"[{name}] {key} = {raw!r}: {exc}") from None
    return out


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    for sec in cp.sections():
        if sec not in _SCHEMA:
            raise ConfigError(f"unknown section [{sec}]; allowed: {sorted(_SCHEMA)}")
    vals = {name: _parse_section(cp, name) for name in _SCHEMA}

    def build(name, factory, **extra):
        try:
            return factory(**vals[name], **extra)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{name}] {exc}") from None

    m = dict(vals["model"])
    if "N" not in m:
        raise ConfigError("[model] N is required")
    if "V" in m and "s" not in m:
        m["s"] = len(m["V"])
    if "s" in m and "V" not in m:
        m["V"] = (1.0,) * m["s"]
    vals["model"] = m
    model = build("model", ModelParams)
    init = build("init", InitSpec)
    try:
        validate(init, model)
    except ValueError as exc:
        raise ConfigError(f"[init] {exc}") from None
    integ = build("integrator", IntegratorConfig)
    obs = build("observables", ObservablesConfig)
    pred = build("predict", PredictConfig)
    sweep = build("sweep", SweepConfig)
    if obs.mode not in MODES:
        raise ConfigError(f"[observables] mode must be one of {MODES}, got {obs.mode!r}")
    if pred.xi_source not in ("measured", "canonical"):
        raise ConfigError(f"[predict] xi_source must be 'measured' or 'canonical', got {pred.xi_source!r}")
    if pred.derivative not in ("partial", "total"):
        raise ConfigError(f"[predict] derivative must be 'partial' or 'total', got {pred.derivative!r}")
    if sweep.axis not in ("N", "delta"):
        raise ConfigError(f"[sweep] axis must be 'N' or 'delta', got {sweep.axis!r}")
    if not 0 < obs.equilibrium_fraction <= 1:
        raise ConfigError("[observables] equilibrium_fraction must lie in (0, 1]")
    outputs = vals["outputs"]
    series = outputs.get("series", SERIES)
    bad = [s for s in series if s not in SERIES]
    if bad:
        raise ConfigError(f"[outputs] unknown series {bad}; allowed: {list(SERIES)}")
    return RunConfig(model, init, integ, obs, pred, sweep,
                     outputs.get("directory", "out"), tuple(series), text)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))


def canonical_text(cfg: RunConfig) -> str:
    """Deterministic rendering of every setting (used for hashing and metadata)."""
    lines = []
    for name, obj in (("model", cfg.model), ("init", cfg.init), ("integrator", cfg.integrator),
                      ("observables", cfg.observables), ("predict", cfg.predict),
                      ("sweep", cfg.sweep)):
        lines.append(f"[{name}]")
        for f in fields(obj):
            if f.name in ("q", "p"):
                continue
            v = getattr(obj, f.name)
            if isinstance(v, float) and not math.isfinite(v):
                v = str(v)
            lines.append(f"{f.name} = {v!r}")
    lines.append("[outputs]")
    lines.append(f"series = {cfg.series!r}")
    return "\n".join(lines) + "\n"


__all__ = ["ConfigError", "RunConfig", "ObservablesConfig", "PredictConfig", "SweepConfig",
           "parse_config", "load_config", "canonical_text", "KINDS", "SCHEMES"]
