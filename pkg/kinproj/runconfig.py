"""Experiment description files.

A config file is a list of ``key = value`` lines; ``#`` starts a comment. Lists are
comma separated. Unknown keys, malformed values and rule violations are reported
with the offending line number.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple

from . import config
from .errors import ConfigError
from .grid import BoundaryCondition, Grid
from .reference import heat_max_nu
from .scheme import FluxKind
from .velocity import VelocitySpace, build


class Model(str, Enum):
    LINEAR = "linear"
    SUOLSON = "suolson"


class Mode(str, Enum):
    INNER = "inner"
    PROJECTIVE = "projective"
    HEAT = "heat"
    REFERENCE = "reference"
    COMPARE = "compare"


class DtPolicy(str, Enum):
    EPS_SQUARED = "eps2"
    EPS_CUBED = "eps3"
    EXPLICIT = "explicit"


class Sweep(str, Enum):
    EPS = "eps"
    NU = "nu"


@dataclass(frozen=True)
class SourceSpec:
    """Su-Olson source: a constant value on [lo, hi], or explicit per-cell values."""

    lo: float = -0.5
    hi: float = 0.5
    value: float = 1.0
    cells: Optional[Tuple[float, ...]] = None


@dataclass(frozen=True)
class RunConfig:
    model: Model = Model.LINEAR
    p: int = 10
    eps: float = 0.05
    x_left: float = -1.0
    x_right: float = 1.0
    n_cells: int = 20
    bc: BoundaryCondition = BoundaryCondition.PERIODIC
    flux: FluxKind = FluxKind.CENTERED
    mode: Mode = Mode.PROJECTIVE
    dt_policy: DtPolicy = DtPolicy.EPS_SQUARED
    dt_inner: Optional[float] = None
    nu: float = 1.0
    k_inner: Optional[int] = None  # None means choose the smallest stable K
    heat_nu: float = 0.4
    t_end: float = 1.0
    snapshot_times: Tuple[float, ...] = ()
    sigma_a: float = 1.0
    source: SourceSpec = field(default_factory=SourceSpec)
    a: Tuple[float, ...] = (1.0,)
    reference_policy: DtPolicy = DtPolicy.EPS_CUBED
    reference_dt_scale: float = 1.0
    cost_ceiling: Optional[int] = None
    output_dir: str = config.DEFAULT_OUTPUT_DIR
    workers: int = 1
    sweep: Sweep = Sweep.EPS
    sweep_eps: Tuple[float, ...] = ()
    sweep_nu: Tuple[float, ...] = ()
    sweep_times: Tuple[float, ...] = (1.25, 2.5, 3.75)
    k_max: int = config.DEFAULT_K_MAX
    continuum_modes: int = 0
    spectrum_dt_scales: Tuple[float, ...] = (1.0,)
    stability_k: Tuple[int, ...] = (1, 2, 3)
    write_distribution: bool = False

    # ------------------------------------------------------------------

    def grid(self) -> Grid:
        return Grid(self.x_left, self.x_right, self.n_cells, self.bc)

    def velocity(self) -> VelocitySpace:
        return build(self.p)

    def inner_dt(self, eps: Optional[float] = None) -> float:
        eps = self.eps if eps is None else eps
        if self.dt_policy == DtPolicy.EXPLICIT:
            assert self.dt_inner is not None
            return self.dt_inner
        if self.dt_policy == DtPolicy.EPS_CUBED:
            return eps**3
        return eps**2

    def dt_outer(self, vs: VelocitySpace, nu: Optional[float] = None) -> float:
        nu = self.nu if nu is None else nu
        return nu * self.grid().dx ** 2 / vs.d_p

    def with_overrides(self, **changes: Any) -> "RunConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


# ------------------------------------------------------------------
# value parsers
# ------------------------------------------------------------------


def _float(text: str) -> float:
    return float(text)


def _int(text: str) -> int:
    value = float(text)
    if value != int(value):
        raise ValueError(f"expected an integer, got {text}")
    return int(value)


def _float_list(text: str) -> Tuple[float, ...]:
    return tuple(float(item) for item in text.split(",") if item.strip())


def _int_list(text: str) -> Tuple[int, ...]:
    return tuple(_int(item) for item in text.split(",") if item.strip())


def _bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text}")


def _k_inner(text: str) -> Optional[int]:
    return None if text.lower() == "auto" else _int(text)


def _optional_int(text: str) -> Optional[int]:
    return None if text.lower() in ("none", "default") else _int(text)


def _source(text: str) -> SourceSpec:
    words = text.replace(",", " ").split()
    if not words or words[0] == "default":
        return SourceSpec()
    kind, values = words[0], [float(w) for w in words[1:]]
    if kind == "strip":
        if len(values) != 3:
            raise ValueError("strip source needs lo hi value")
        return SourceSpec(lo=values[0], hi=values[1], value=values[2])
    if kind == "cells":
        return SourceSpec(cells=tuple(values))
    raise ValueError(f"unknown source kind {kind!r} (expected default, strip or cells)")


def _enum(kind: type) -> Callable[[str], Any]:
    def parse(text: str) -> Any:
        try:
            return kind(text.lower())
        except ValueError:
            choices = ", ".join(m.value for m in kind)
            raise ValueError(f"expected one of {choices}, got {text}") from None

    return parse


PARSERS: Dict[str, Callable[[str], Any]] = {
    "model": _enum(Model),
    "p": _int,
    "eps": _float,
    "x_left": _float,
    "x_right": _float,
    "domain": _float_list,
    "n_cells": _int,
    "bc": _enum(BoundaryCondition),
    "flux": _enum(FluxKind),
    "mode": _enum(Mode),
    "dt_policy": _enum(DtPolicy),
    "dt_inner": _float,
    "nu": _float,
    "k_inner": _k_inner,
    "heat_nu": _float,
    "t_end": _float,
    "snapshot_times": _float_list,
    "sigma_a": _float,
    "source": _source,
    "a": _float_list,
    "reference_policy": _enum(DtPolicy),
    "reference_dt_scale": _float,
    "cost_ceiling": _optional_int,
    "output_dir": str,
    "workers": _int,
    "sweep": _enum(Sweep),
    "sweep_eps": _float_list,
    "sweep_nu": _float_list,
    "sweep_times": _float_list,
    "k_max": _int,
    "continuum_modes": _int,
    "spectrum_dt_scales": _float_list,
    "stability_k": _int_list,
    "write_distribution": _bool,
}

FIELD_NAMES = {f.name for f in fields(RunConfig)}


def parse_config(text: str) -> RunConfig:
    values: Dict[str, Any] = {}
    lines: Dict[str, int] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=number)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in PARSERS:
            raise ConfigError(f"unknown key {key!r}", line=number)
        if key in lines:
            raise ConfigError(f"duplicate key {key!r} (first set on line {lines[key]})", line=number)
        try:
            parsed = PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", line=number) from None
        if key == "domain":
            if len(parsed) != 2:
                raise ConfigError("domain needs two values: x_left, x_right", line=number)
            values["x_left"], values["x_right"] = parsed
            lines["x_left"] = lines["x_right"] = number
        else:
            values[key] = parsed
        lines[key] = number

    if "dt_inner" in values and "dt_policy" not in values:
        values["dt_policy"] = DtPolicy.EXPLICIT
    cfg = RunConfig(**{k: v for k, v in values.items() if k in FIELD_NAMES})
    validate(cfg, lines)
    return cfg


def load_config(path: Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def validate(cfg: RunConfig, lines: Optional[Dict[str, int]] = None) -> None:
    """Check every parameter rule the solvers rely on; errors cite the line of the key involved."""
    lines = lines or {}

    def fail(key: str, message: str, rule: Optional[str] = None) -> None:
        raise ConfigError(message, line=lines.get(key), rule=rule)

    if cfg.p < 1:
        fail("p", f"p must be at least 1, got {cfg.p}", "p >= 1")
    if not cfg.eps > 0:
        fail("eps", f"eps must be positive, got {cfg.eps}", "eps > 0")
    if cfg.eps < config.MIN_EPS:
        fail("eps", f"eps={cfg.eps} is below {config.MIN_EPS}", "eps >= 1e-8")
    if cfg.n_cells < 1:
        fail("n_cells", f"n_cells must be positive, got {cfg.n_cells}", "n_cells >= 1")
    if not cfg.x_right > cfg.x_left:
        fail("x_right", f"empty domain [{cfg.x_left}, {cfg.x_right}]", "x_left < x_right")
    if cfg.model == Model.LINEAR and (cfg.x_left > -1.0 or cfg.x_right < 1.0):
        fail("x_left", "the linear benchmark needs a domain covering [-1, 1]")
    if not cfg.t_end > 0:
        fail("t_end", f"t_end must be positive, got {cfg.t_end}", "t_end > 0")
    for t in cfg.snapshot_times:
        if not 0 < t <= cfg.t_end:
            fail("snapshot_times", f"snapshot time {t} outside (0, t_end]")
    if cfg.dt_policy == DtPolicy.EXPLICIT and cfg.dt_inner is None:
        fail("dt_policy", "dt_policy = explicit needs dt_inner")
    if cfg.dt_inner is not None and not cfg.dt_inner > 0:
        fail("dt_inner", f"dt_inner must be positive, got {cfg.dt_inner}", "dt > 0")

    eps_values = cfg.sweep_eps or (cfg.eps,)
    vs = build(cfg.p)
    dx = (cfg.x_right - cfg.x_left) / cfg.n_cells
    for eps in eps_values:
        if not eps >= config.MIN_EPS:
            fail("sweep_eps", f"eps={eps} must be at least {config.MIN_EPS}", "eps >= 1e-8")
        dt = cfg.inner_dt(eps)
        if dt > 2.0 * eps**2 * (1.0 + 1e-12):
            fail("dt_inner", f"inner step {dt} exceeds 2*eps^2 = {2 * eps**2}", "inner stability ceiling dt <= 2*eps^2")
        if (
            cfg.flux == FluxKind.CENTERED
            and cfg.dt_policy == DtPolicy.EPS_SQUARED
            and dx < vs.v_max * eps * (1.0 - 1e-12)
        ):
            fail("n_cells", f"dx={dx:.6g} is smaller than v_max*eps={vs.v_max * eps:.6g}", "mesh bound dx >= v_max*eps")

    for nu in cfg.sweep_nu or (cfg.nu,):
        if not nu > 0:
            fail("nu", f"nu must be positive, got {nu}", "nu > 0")
        if cfg.k_inner is None and nu > 2.0:
            fail("nu", f"nu={nu} exceeds 2 and K is auto; set k_inner explicitly", "0 < nu <= 2")
    if cfg.k_inner is not None:
        if cfg.k_inner < 1:
            fail("k_inner", f"K must be at least 1, got {cfg.k_inner}", "K >= 1")
        dt_outer = min(cfg.sweep_nu or (cfg.nu,)) * dx**2 / vs.d_p
        dt_max = max(cfg.inner_dt(e) for e in eps_values)
        if cfg.mode in (Mode.PROJECTIVE, Mode.COMPARE) and dt_outer < (cfg.k_inner + 1) * dt_max * (1.0 - 1e-12):
            fail("nu", f"outer step {dt_outer:.6g} is shorter than (K+1)*dt", "dt_outer >= (K+1)*dt_inner")
    if not 0 < cfg.heat_nu <= heat_max_nu():
        fail("heat_nu", f"heat_nu={cfg.heat_nu} outside (0, {heat_max_nu()}]", "explicit heat stability dt <= dx^2/(2d)")
    if cfg.sigma_a < 0:
        fail("sigma_a", f"sigma_a must be nonnegative, got {cfg.sigma_a}", "sigma_a >= 0")
    if cfg.source.cells is not None and len(cfg.source.cells) != cfg.n_cells:
        fail("source", f"source has {len(cfg.source.cells)} values for {cfg.n_cells} cells")
    if not cfg.a or any(not a > 0 for a in cfg.a):
        fail("a", f"initial levels must be positive, got {cfg.a}", "A > 0")
    if not cfg.reference_dt_scale > 0:
        fail("reference_dt_scale", "reference_dt_scale must be positive")
    if cfg.reference_policy == DtPolicy.EXPLICIT:
        fail("reference_policy", "reference_policy must be eps2 or eps3")
    if cfg.cost_ceiling is not None and cfg.cost_ceiling < 1:
        fail("cost_ceiling", f"cost_ceiling must be positive, got {cfg.cost_ceiling}")
    if cfg.workers < 1:
        fail("workers", f"workers must be at least 1, got {cfg.workers}")
    if any(not t > 0 for t in cfg.sweep_times):
        fail("sweep_times", "sweep times must be positive")
    if cfg.k_max < 1:
        fail("k_max", f"k_max must be at least 1, got {cfg.k_max}")
    if cfg.continuum_modes < 0:
        fail("continuum_modes", "continuum_modes must be nonnegative")
    if any(not 0 < s <= 2.0 for s in cfg.spectrum_dt_scales):
        fail("spectrum_dt_scales", "spectrum dt scales must lie in (0, 2]", "inner stability ceiling dt <= 2*eps^2")
    if any(k < 1 for k in cfg.stability_k):
        fail("stability_k", "stability K values must be at least 1")
