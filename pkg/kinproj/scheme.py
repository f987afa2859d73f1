"""Finite volume transport operator and the forward Euler inner stepper.

One inner step of size dt applies

    f' = f - (dt/eps) Phi(f) + (dt/eps^2) (rho - f)

with rho taken from the pre-update f. The Su-Olson variant adds
dt * (sigma_a (theta - rho) + S) to every velocity and relaxes theta towards rho.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Iterable, Optional

import numpy as np

from . import config
from .errors import ConfigError, SolverDivergenceError
from .grid import (
    Grid,
    KineticState,
    State,
    SuOlsonState,
    Trajectory,
    density,
    kinetic_part,
    log_entry,
)
from .velocity import VelocitySpace

logger = logging.getLogger(__name__)


class FluxKind(str, Enum):
    UPWIND = "upwind"
    CENTERED = "centered"


@dataclass(frozen=True)
class InnerParams:
    eps: float
    dt: float
    flux: FluxKind = FluxKind.CENTERED
    sigma_a: float = 1.0
    source: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if not self.eps > 0:
            raise ConfigError(f"eps must be positive, got {self.eps}", rule="eps > 0")
        if self.eps < config.MIN_EPS:
            raise ConfigError(f"eps={self.eps} is below {config.MIN_EPS}", rule="eps >= 1e-8")
        if not self.dt > 0:
            raise ConfigError(f"inner step must be positive, got {self.dt}", rule="dt > 0")
        if self.dt > 2.0 * self.eps**2 * (1.0 + 1e-12):
            raise ConfigError(
                f"inner step {self.dt} exceeds 2*eps^2 = {2.0 * self.eps**2}",
                rule="inner stability ceiling dt <= 2*eps^2",
            )
        if self.sigma_a < 0:
            raise ConfigError(f"sigma_a must be nonnegative, got {self.sigma_a}", rule="sigma_a >= 0")
        object.__setattr__(self, "flux", FluxKind(self.flux))

    def with_dt(self, dt: float) -> "InnerParams":
        return replace(self, dt=dt)


def check_mesh(grid: Grid, vs: VelocitySpace, eps: float) -> None:
    """dt = eps^2 with the centered flux needs dx >= v_max * eps."""
    if grid.dx < vs.v_max * eps * (1.0 - 1e-12):
        raise ConfigError(
            f"dx={grid.dx:.6g} is smaller than v_max*eps={vs.v_max * eps:.6g}",
            rule="mesh bound dx >= v_max*eps",
        )


def default_source(grid: Grid) -> np.ndarray:
    """Unit source on the strip |x| <= 1/2."""
    return (np.abs(grid.centers) <= 0.5 + 1e-12).astype(float)


def resolve_source(params: InnerParams, grid: Grid) -> InnerParams:
    if params.source is not None:
        source = np.asarray(params.source, dtype=float)
        if source.shape != (grid.n_cells,):
            raise ConfigError(f"source has {source.size} values for {grid.n_cells} cells")
        return params
    return replace(params, source=default_source(grid))


def phi(state: State, flux: FluxKind) -> np.ndarray:
    """Flux difference (phi_{i+1/2} - phi_{i-1/2}) / dx for every cell and velocity."""
    k = kinetic_part(state)
    padded = k.grid.pad(k.f)
    v = k.velocity.velocities
    dx = k.grid.dx
    if FluxKind(flux) == FluxKind.CENTERED:
        return v * (padded[2:] - padded[:-2]) / (2.0 * dx)
    backward = padded[1:-1] - padded[:-2]
    forward = padded[2:] - padded[1:-1]
    return v * np.where(v > 0, backward, forward) / dx


def _check_finite(values: np.ndarray, step: int) -> None:
    if not np.isfinite(values).all():
        raise SolverDivergenceError("non-finite distribution values", step=step)


def step_linear(state: KineticState, params: InnerParams) -> KineticState:
    f = state.f
    rho = density(state)
    dt, eps = params.dt, params.eps
    f_new = f - (dt / eps) * phi(state, params.flux) + (dt / eps**2) * (rho[:, None] - f)
    _check_finite(f_new, state.steps + 1)
    return state.with_values(f_new, state.t + dt)


def step_suolson(state: SuOlsonState, params: InnerParams) -> SuOlsonState:
    kinetic = state.kinetic
    f = kinetic.f
    rho = density(kinetic)
    theta = state.theta
    dt, eps, sigma = params.dt, params.eps, params.sigma_a
    source = params.source if params.source is not None else default_source(kinetic.grid)

    coupling = sigma * (theta - rho) + source
    f_new = (
        f
        - (dt / eps) * phi(kinetic, params.flux)
        + (dt / eps**2) * (rho[:, None] - f)
        + dt * coupling[:, None]
    )
    theta_new = theta + dt * sigma * (rho - theta)
    _check_finite(f_new, kinetic.steps + 1)
    _check_finite(theta_new, kinetic.steps + 1)
    return SuOlsonState(kinetic=kinetic.with_values(f_new, kinetic.t + dt), theta=theta_new)


def step(state: State, params: InnerParams) -> State:
    if isinstance(state, SuOlsonState):
        return step_suolson(state, params)
    return step_linear(state, params)


StepFn = Callable[[State, InnerParams], State]


def guard_growth(state: State, limit: float) -> None:
    if state.max_abs() > limit:
        raise SolverDivergenceError(
            f"solution grew beyond {limit:.3g} (max |f| = {state.max_abs():.3g})",
            step=state.steps,
        )


def growth_limit(state: State) -> float:
    return config.DIVERGENCE_FACTOR * max(1.0, state.max_abs())


def run_inner(
    state: State,
    params: InnerParams,
    n_steps: int,
    trajectory: Optional[Trajectory] = None,
) -> State:
    """Apply n_steps inner steps; snapshots land in `trajectory` when given."""
    if n_steps < 0:
        raise ValueError(f"n_steps must be nonnegative, got {n_steps}")
    if isinstance(state, SuOlsonState):
        params = resolve_source(params, state.grid)

    limit = growth_limit(state)
    tol = config.TIME_TOL * max(1.0, params.dt)
    for _ in range(n_steps):
        state = step(state, params)
        if trajectory is not None:
            trajectory.offer(state, tol)
    if n_steps:
        guard_growth(state, limit)
    return state


def advance_inner(
    state: State,
    params: InnerParams,
    t_target: float,
    trajectory: Optional[Trajectory] = None,
) -> State:
    """Inner steps until t_target; a shorter final step absorbs any remainder."""
    remaining = t_target - state.t
    tol = config.TIME_TOL * max(1.0, params.dt)
    if remaining < -tol:
        raise ValueError(f"target time {t_target} lies before the state time {state.t}")
    n_full = int(np.floor(remaining / params.dt + 1e-9))
    state = run_inner(state, params, n_full, trajectory)
    rest = t_target - state.t
    if rest > tol:
        state = run_inner(state, params.with_dt(rest), 1, trajectory)
    return set_time(state, t_target)


def set_time(state: State, t: float) -> State:
    if isinstance(state, SuOlsonState):
        return replace(state, kinetic=replace(state.kinetic, t=t))
    return replace(state, t=t)


def run_to_times(
    state: State,
    params: InnerParams,
    t_end: float,
    snapshot_times: Iterable[float] = (),
) -> Trajectory:
    """Plain inner integration with a snapshot at every requested time up to t_end."""
    if isinstance(state, SuOlsonState):
        params = resolve_source(params, state.grid)
    targets = sorted({float(t) for t in snapshot_times if state.t < t < t_end} | {float(t_end)})
    trajectory = Trajectory(snapshot_times=tuple(targets), dt_inner=params.dt)
    for target in targets:
        state = advance_inner(state, params, target)
        trajectory.snapshots[target] = state
        trajectory.log.append(log_entry(state.steps, state))
    trajectory.final = state
    return trajectory
