"""Reference solutions: the limiting heat equation and fine-step kinetic runs."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Iterable, Optional

import numpy as np

from . import config
from .errors import ConfigError, CostCeilingError
from .grid import Grid, State, Trajectory
from .scheme import FluxKind, InnerParams, run_to_times

logger = logging.getLogger(__name__)

HEAT_MAX_NU = 0.5


def heat_max_nu() -> float:
    """Largest nu = d dt / dx^2 for which the explicit heat step is stable."""
    return HEAT_MAX_NU


@dataclass(frozen=True)
class HeatParams:
    diffusivity: float
    dt: float
    grid: Grid

    def __post_init__(self) -> None:
        if not (self.diffusivity > 0 and self.dt > 0):
            raise ConfigError("diffusivity and dt must be positive")
        limit = self.grid.dx**2 / (2.0 * self.diffusivity)
        if self.dt > limit * (1.0 + 1e-12):
            raise ConfigError(
                f"heat step {self.dt:.6g} exceeds dx^2/(2d) = {limit:.6g}",
                rule="explicit heat stability dt <= dx^2/(2d)",
            )

    @property
    def nu(self) -> float:
        return self.diffusivity * self.dt / self.grid.dx**2


@dataclass(frozen=True)
class HeatState:
    rho: np.ndarray
    grid: Grid
    t: float = 0.0

    def max_abs(self) -> float:
        return float(np.abs(self.rho).max())


def heat_step(rho: np.ndarray, hp: HeatParams) -> np.ndarray:
    padded = hp.grid.pad(rho)
    return rho + hp.nu * (padded[2:] - 2.0 * rho + padded[:-2])


def heat_flux(rho: np.ndarray, grid: Grid, diffusivity: float) -> np.ndarray:
    """Diffusive flux -d d(rho)/dx, the eps -> 0 limit of J."""
    padded = grid.pad(rho)
    return -diffusivity * (padded[2:] - padded[:-2]) / (2.0 * grid.dx)


def run_heat(
    rho: np.ndarray,
    hp: HeatParams,
    t_end: float,
    snapshot_times: Iterable[float] = (),
    t0: float = 0.0,
) -> Trajectory:
    """Explicit heat steps to each target time, shortening the step that lands on it."""
    targets = sorted({float(t) for t in snapshot_times if t0 < t < t_end} | {float(t_end)})
    trajectory = Trajectory(snapshot_times=tuple(targets))
    state = HeatState(rho=np.asarray(rho, dtype=float), grid=hp.grid, t=t0)
    tol = config.TIME_TOL * max(1.0, hp.dt)
    for target in targets:
        n_full = int(math.floor((target - state.t) / hp.dt + 1e-9))
        values = state.rho
        for _ in range(n_full):
            values = heat_step(values, hp)
        t = state.t + n_full * hp.dt
        rest = target - t
        if rest > tol:
            values = heat_step(values, replace(hp, dt=rest))
        state = HeatState(rho=values, grid=hp.grid, t=target)
        trajectory.snapshots[target] = state
    trajectory.final = state
    return trajectory


def estimated_steps(t_start: float, t_end: float, dt: float) -> int:
    return int(math.ceil((t_end - t_start) / dt - 1e-9))


def reference_dt(eps: float, policy: str = "eps3", dt: Optional[float] = None, dt_scale: float = 1.0) -> float:
    if dt is not None:
        return dt * dt_scale
    if policy == "eps3":
        return eps**3 * dt_scale
    if policy == "eps2":
        return eps**2 * dt_scale
    raise ValueError(f"unknown reference step policy: {policy}")


def kinetic_reference(
    state: State,
    eps: float,
    t_end: float,
    flux: FluxKind = FluxKind.CENTERED,
    dt: Optional[float] = None,
    policy: str = "eps3",
    dt_scale: float = 1.0,
    snapshot_times: Iterable[float] = (),
    cost_ceiling: Optional[int] = None,
    sigma_a: float = 1.0,
    source: Optional[np.ndarray] = None,
) -> Trajectory:
    """Plain inner integration with a fine step (eps^3 by default) to every snapshot time."""
    dt_ref = reference_dt(eps, policy, dt, dt_scale)
    ceiling = config.cost_ceiling(cost_ceiling)
    n_steps = estimated_steps(state.t, t_end, dt_ref)
    if n_steps > ceiling:
        raise CostCeilingError(n_steps, ceiling)
    logger.info("reference run: eps=%g dt=%.6g, %d inner steps", eps, dt_ref, n_steps)

    params = InnerParams(eps=eps, dt=dt_ref, flux=flux, sigma_a=sigma_a, source=source)
    return run_to_times(state, params, t_end, snapshot_times)
