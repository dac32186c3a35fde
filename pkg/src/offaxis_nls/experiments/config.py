"""Scenario configuration: TOML schema, validation and round-trip.

A scenario file has top-level keys ``name``, ``kind``, ``seed``, ``horizon``
and the tables ``[grid]``, ``[nonlinearity]``, ``[initial_data]``,
``[controls]``, ``[decay]``, ``[picard]``, ``[outputs]``.  Unknown keys are
errors.  All problems in a file are collected and reported together.
"""

from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..dynamics import BlowupThresholds, Controls, NonlinearitySpec, Sign
from ..grid import GridSpec, build_grid

__all__ = ["ConfigError", "ScenarioConfig", "GridConfig", "NonlinearityConfig", "InitialData",
           "ControlsConfig", "DecayConfig", "PicardConfig", "OutputsConfig", "KINDS",
           "INITIAL_DATA_TYPES", "parse_config", "serialize_config", "load_config", "dump_config",
           "config_from_dict"]

KINDS = ("evolve", "decay", "picard", "groundstate")
INITIAL_DATA_TYPES = ("gaussian", "ground_state_multiple", "plane_wave_packet", "from_file",
                      "random_band_limited")


class ConfigError(ValueError):
    """One or more validation problems; ``errors`` lists them all."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid scenario configuration:\n  - " + "\n  - ".join(self.errors))


@dataclass(frozen=True)
class GridConfig:
    d: int = 2
    k: int = 1
    epsilon: float = 0.5
    box_lengths: tuple[float, ...] = (32.0, 32.0)
    resolutions: tuple[int, ...] = (128, 128)

    def build(self) -> GridSpec:
        return build_grid(self.d, self.k, self.epsilon, self.box_lengths, self.resolutions)


@dataclass(frozen=True)
class NonlinearityConfig:
    sigma: float = 1.0
    sign: str = "focusing"
    enabled: bool = True

    def build(self) -> NonlinearitySpec:
        return NonlinearitySpec(self.sigma, Sign(self.sign), self.enabled)


@dataclass(frozen=True)
class InitialData:
    """Initial field description.

    gaussian / plane_wave_packet: ``amplitude * exp(-sum((x-c)^2 / (2 w^2))) * exp(i kappa.x)``
    ground_state_multiple: ``factor * Q`` with Q the ground state in d_eff = d
    from_file: a saved field on the same grid
    random_band_limited: Gaussian-enveloped random modes below ``cutoff`` times Nyquist
    """

    type: str = "gaussian"
    amplitude: float = 1.0
    widths: tuple[float, ...] | None = None
    center: tuple[float, ...] | None = None
    modulation: tuple[float, ...] | None = None
    factor: float = 1.0
    path: str | None = None
    cutoff: float = 0.25


@dataclass(frozen=True)
class ControlsConfig:
    rtol: float = 1e-9
    dt_init: float = 1e-3
    dt_min: float = 1e-8
    dt_max: float = 1e-2
    diag_interval: float = 0.01
    grad_growth: float = 10.0
    tail_threshold: float = 0.01
    tail_exhausted: float = 0.1
    dealias: bool = True
    max_steps: int = 2_000_000

    def build(self, csv_path: str | None = None) -> Controls:
        return Controls(rtol=self.rtol, dt_init=self.dt_init, dt_min=self.dt_min, dt_max=self.dt_max,
                        diag_interval=self.diag_interval,
                        thresholds=BlowupThresholds(self.grad_growth, self.tail_threshold),
                        tail_exhausted=self.tail_exhausted, dealias=self.dealias, csv_path=csv_path,
                        max_steps=self.max_steps)


@dataclass(frozen=True)
class DecayConfig:
    r: tuple[float, ...] = (4.0, math.inf)
    epsilons: tuple[float, ...] | None = None
    variants: tuple[str, ...] = ("P",)
    t_min: float = 1.0
    t_max: float = 100.0
    n_times: int = 25
    wrap_tol: float = 1e-6


@dataclass(frozen=True)
class PicardConfig:
    T: float = 0.1
    n_iters: int = 8
    n_nodes: int = 65
    compare_evolve: bool = True


@dataclass(frozen=True)
class OutputsConfig:
    csv: bool = True
    snapshots: bool = True
    plot: bool = False


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    kind: str = "evolve"
    seed: int = 0
    horizon: float = 1.0
    grid: GridConfig = field(default_factory=GridConfig)
    nonlinearity: NonlinearityConfig = field(default_factory=NonlinearityConfig)
    initial_data: InitialData = field(default_factory=InitialData)
    controls: ControlsConfig = field(default_factory=ControlsConfig)
    decay: DecayConfig = field(default_factory=DecayConfig)
    picard: PicardConfig = field(default_factory=PicardConfig)
    outputs: OutputsConfig = field(default_factory=OutputsConfig)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return _to_plain(self)


_TABLES = {"grid": GridConfig, "nonlinearity": NonlinearityConfig, "initial_data": InitialData,
           "controls": ControlsConfig, "decay": DecayConfig, "picard": PicardConfig,
           "outputs": OutputsConfig}
_TOP = {"name", "kind", "seed", "horizon", *_TABLES}


def _to_plain(obj) -> Any:
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in fields(obj)
                if getattr(obj, f.name) is not None}
    if isinstance(obj, tuple):
        return [_to_plain(v) for v in obj]
    return obj


# --------------------------------------------------------------------------
# coercion

def _coerce(value, typ: str, where: str, errors: list[str]):
    """Coerce a TOML value to the annotated field type; record a message on failure."""
    base = typ.replace(" | None", "")
    try:
        if base == "int":
            if isinstance(value, bool) or not isinstance(value, int):
                raise TypeError
            return value
        if base == "float":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeError
            return float(value)
        if base == "bool":
            if not isinstance(value, bool):
                raise TypeError
            return value
        if base == "str":
            if not isinstance(value, str):
                raise TypeError
            return value
        if base.startswith("tuple["):
            inner = base[6:].split(",")[0].strip()
            if not isinstance(value, (list, tuple)):
                raise TypeError
            before = len(errors)
            out = tuple(_coerce(v, inner, f"{where}[{i}]", errors) for i, v in enumerate(value))
            return out if len(errors) == before else None
    except TypeError:
        errors.append(f"{where}: expected {base}, got {type(value).__name__} {value!r}")
        return None
    raise AssertionError(f"unhandled annotation {typ}")


def _table(cls, raw, where: str, errors: list[str]):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        errors.append(f"{where}: expected a table")
        return cls()
    known = {f.name: f for f in fields(cls)}
    for key in raw:
        if key not in known:
            errors.append(f"{where}.{key}: unknown key")
    kwargs = {}
    for name, f in known.items():
        if name in raw:
            v = _coerce(raw[name], str(f.type), f"{where}.{name}", errors)
            if v is not None:
                kwargs[name] = v
    return cls(**kwargs)


def config_from_dict(raw: dict) -> ScenarioConfig:
    """Validate a plain mapping and build a :class:`ScenarioConfig`."""
    errors: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError(["top level must be a table"])
    for key in raw:
        if key not in _TOP:
            errors.append(f"{key}: unknown key")
    top = {}
    for key, typ in (("name", "str"), ("kind", "str"), ("seed", "int"), ("horizon", "float")):
        if key in raw:
            v = _coerce(raw[key], typ, key, errors)
            if v is not None:
                top[key] = v
    if "name" not in top and "name" not in raw:
        errors.append("name: required")
    tables = {k: _table(cls, raw.get(k), k, errors) for k, cls in _TABLES.items()}
    cfg = ScenarioConfig(name=top.get("name", "unnamed"), **{k: v for k, v in top.items() if k != "name"},
                         **tables)
    errors.extend(_semantic_errors(cfg))
    if errors:
        raise ConfigError(errors)
    return cfg


def _semantic_errors(cfg: ScenarioConfig) -> list[str]:
    errs = []
    if cfg.kind not in KINDS:
        errs.append(f"kind: must be one of {KINDS}, got {cfg.kind!r}")
    if not cfg.name or any(c in cfg.name for c in "/\\"):
        errs.append("name: must be a non-empty string without path separators")
    if cfg.seed < 0:
        errs.append("seed: must be nonnegative")
    if not (cfg.horizon > 0 and math.isfinite(cfg.horizon)):
        errs.append("horizon: must be positive and finite")

    g = cfg.grid
    try:
        g.build()
    except (ValueError, TypeError) as exc:
        errs.append(f"grid: {exc}")

    try:
        cfg.nonlinearity.build()
    except ValueError as exc:
        errs.append(f"nonlinearity: {exc}")

    c = cfg.controls
    try:
        c.build()
    except ValueError as exc:
        errs.append(f"controls: {exc}")
    for name in ("grad_growth", "tail_threshold", "tail_exhausted"):
        if not getattr(c, name) > 0:
            errs.append(f"controls.{name}: must be positive")
    if c.max_steps < 1:
        errs.append("controls.max_steps: must be at least 1")

    ic = cfg.initial_data
    if ic.type not in INITIAL_DATA_TYPES:
        errs.append(f"initial_data.type: must be one of {INITIAL_DATA_TYPES}, got {ic.type!r}")
    for name in ("widths", "center", "modulation"):
        v = getattr(ic, name)
        if v is not None and len(v) != g.d:
            errs.append(f"initial_data.{name}: needs {g.d} entries, got {len(v)}")
    if ic.widths is not None and any(w <= 0 for w in ic.widths):
        errs.append("initial_data.widths: must be positive")
    if ic.type == "from_file" and not ic.path:
        errs.append("initial_data.path: required for from_file")
    if ic.type == "plane_wave_packet" and ic.modulation is None:
        errs.append("initial_data.modulation: required for plane_wave_packet")
    if ic.type == "ground_state_multiple" and g.d not in (1, 2):
        errs.append("initial_data: ground_state_multiple needs d in {1, 2}")
    if not 0 < ic.cutoff <= 1:
        errs.append("initial_data.cutoff: must lie in (0, 1]")

    dc = cfg.decay
    if not 0 < dc.t_min < dc.t_max:
        errs.append("decay: need 0 < t_min < t_max")
    if dc.n_times < 2:
        errs.append("decay.n_times: need at least 2")
    if any(r < 2 for r in dc.r):
        errs.append("decay.r: every r must be >= 2")
    if dc.epsilons is not None and any(e < 0 for e in dc.epsilons):
        errs.append("decay.epsilons: must be nonnegative")
    if any(v not in ("P", "H") for v in dc.variants):
        errs.append("decay.variants: entries must be 'P' or 'H'")

    p = cfg.picard
    if not p.T > 0 or p.n_iters < 3 or p.n_nodes < 3:
        errs.append("picard: need T > 0, n_iters >= 3, n_nodes >= 3")
    return errs


# --------------------------------------------------------------------------
# text round trip

def parse_config(text: str) -> ScenarioConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"TOML syntax: {exc}"]) from None
    return config_from_dict(raw)


def serialize_config(cfg: ScenarioConfig) -> str:
    return tomli_w.dumps(cfg.to_dict())


def load_config(path) -> ScenarioConfig:
    return parse_config(Path(path).read_text())


def dump_config(cfg: ScenarioConfig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(serialize_config(cfg))
    return path
