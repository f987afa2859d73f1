"""Projective forward Euler outer integrator and its parameter advisor."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Iterable, Optional

import numpy as np

from . import config
from .errors import ConfigError, SolverDivergenceError
from .grid import Grid, State, SuOlsonState, Trajectory, log_entry
from .scheme import (
    FluxKind,
    InnerParams,
    StepFn,
    advance_inner,
    check_mesh,
    growth_limit,
    guard_growth,
    resolve_source,
    set_time,
    step,
)
from .velocity import VelocitySpace

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProjectiveParams:
    dt_inner: float
    k_inner: int
    dt_outer: float
    t_end: float

    def __post_init__(self) -> None:
        if not (self.dt_inner > 0 and self.dt_outer > 0 and self.t_end > 0):
            raise ConfigError("dt_inner, dt_outer and t_end must be positive")
        if self.k_inner < 1:
            raise ConfigError(f"K must be at least 1, got {self.k_inner}", rule="K >= 1")
        if self.dt_outer < (self.k_inner + 1) * self.dt_inner * (1.0 - 1e-12):
            raise ConfigError(
                f"outer step {self.dt_outer} is shorter than (K+1)*dt = {(self.k_inner + 1) * self.dt_inner}",
                rule="dt_outer >= (K+1)*dt_inner",
            )

    @property
    def extrapolation_length(self) -> float:
        return self.dt_outer - (self.k_inner + 1) * self.dt_inner


def extrapolate(previous: np.ndarray, current: np.ndarray, coeff: float) -> np.ndarray:
    """Chord extrapolation current + coeff * (current - previous)."""
    return current + coeff * (current - previous)


def _extrapolate_state(previous: State, current: State, coeff: float, t: float) -> State:
    if isinstance(current, SuOlsonState):
        kinetic = current.kinetic
        f = extrapolate(previous.kinetic.f, kinetic.f, coeff)
        theta = extrapolate(previous.theta, current.theta, coeff)
        return SuOlsonState(kinetic=replace(kinetic, f=f, t=t), theta=theta)
    return replace(current, f=extrapolate(previous.f, current.f, coeff), t=t)


def projective_step(
    state: State,
    inner: InnerParams,
    pp: ProjectiveParams,
    outer_index: int = 0,
    dt_outer: Optional[float] = None,
    step_fn: StepFn = step,
) -> State:
    """K+1 inner steps, then extrapolate the last chord to t + dt_outer."""
    dt_outer = pp.dt_outer if dt_outer is None else dt_outer
    dt = pp.dt_inner
    if abs(inner.dt - dt) > 1e-15 * max(1.0, dt):
        raise ConfigError(f"inner step {inner.dt} differs from the projective dt_inner {dt}")

    t_start = state.t
    previous = current = state
    try:
        for _ in range(pp.k_inner + 1):
            previous, current = current, step_fn(current, inner)
    except SolverDivergenceError as exc:
        raise SolverDivergenceError("non-finite inner values", step=exc.step, outer_step=outer_index) from exc

    coeff = (dt_outer - (pp.k_inner + 1) * dt) / dt
    result = _extrapolate_state(previous, current, coeff, t_start + dt_outer)
    if not result.is_finite():
        raise SolverDivergenceError("non-finite extrapolated values", step=result.steps, outer_step=outer_index)
    return result


def run_projective(
    state: State,
    inner: InnerParams,
    pp: ProjectiveParams,
    snapshot_times: Iterable[float] = (),
    trajectory: Optional[Trajectory] = None,
) -> Trajectory:
    """Repeat projective steps until t_end, landing exactly on snapshot times.

    A step that would overshoot a target is shortened; if the remaining interval
    is shorter than (K+1) inner steps, plain inner steps finish it instead.
    """
    if pp.t_end < state.t - config.TIME_TOL:
        raise ValueError(f"t_end={pp.t_end} lies before the state time {state.t}")
    if isinstance(state, SuOlsonState):
        inner = resolve_source(inner, state.grid)

    targets = sorted({float(t) for t in snapshot_times if state.t < t < pp.t_end} | {float(pp.t_end)})
    if trajectory is None:
        trajectory = Trajectory(snapshot_times=tuple(targets))
    trajectory.dt_inner = pp.dt_inner
    tol = config.TIME_TOL * max(1.0, pp.dt_outer)
    limit = growth_limit(state)
    min_outer = (pp.k_inner + 1) * pp.dt_inner

    outer_index = 0
    for target in targets:
        while target - state.t > tol:
            remaining = target - state.t
            outer_index += 1
            if remaining >= pp.dt_outer - tol:
                state = projective_step(state, inner, pp, outer_index)
            elif remaining >= min_outer - tol:
                state = projective_step(state, inner, pp, outer_index, dt_outer=remaining)
                state = set_time(state, target)
            else:
                try:
                    state = advance_inner(state, inner, target)
                except SolverDivergenceError as exc:
                    raise SolverDivergenceError(
                        "non-finite inner values", step=exc.step, outer_step=outer_index
                    ) from exc
            if abs(target - state.t) <= tol:
                state = set_time(state, target)
            try:
                guard_growth(state, limit)
            except SolverDivergenceError as exc:
                raise SolverDivergenceError(str(exc), step=exc.step, outer_step=outer_index) from exc
            entry = log_entry(outer_index, state)
            trajectory.log.append(entry)
            logger.debug(
                "%d,%.17g,%.17g,%.17g,%.17g", entry.step, entry.t, entry.rho_min, entry.rho_max, entry.mass
            )
        trajectory.offer(state, tol)

    trajectory.final = state
    return trajectory


@dataclass(frozen=True)
class Advice:
    inner: InnerParams
    projective: ProjectiveParams
    k_closed_form: float
    regime: str
    nu: float
    r: float


def outer_step_size(vs: VelocitySpace, grid: Grid, nu: float) -> float:
    """dt_outer = nu * dx^2 / d_p."""
    return nu * grid.dx**2 / vs.d_p


def parameter_regime(vs: VelocitySpace, nu: float, r: float) -> str:
    if nu <= 0.25:
        return "nu <= 1/4: K = 3 independently of r and p"
    if nu <= 2.0 and r <= vs.d_p / nu:
        return "1/4 < nu <= 2 with r <= d_p/nu: K = 3 is safe"
    return "outside the K = 3 guarantee"


def advise_params(
    vs: VelocitySpace,
    grid: Grid,
    eps: float,
    nu: float,
    t_end: float = 1.0,
    flux: FluxKind = FluxKind.CENTERED,
    k_max: int = config.DEFAULT_K_MAX,
) -> Advice:
    """dt = eps^2, dt_outer = nu dx^2/d_p and the smallest stable K from the mode check."""
    from .spectral import closed_form_k_bound, min_inner_steps

    if not eps > 0:
        raise ConfigError(f"eps must be positive, got {eps}", rule="eps > 0")
    if not 0 < nu <= 2:
        raise ConfigError(f"nu={nu} outside (0, 2]", rule="0 < nu <= 2")
    check_mesh(grid, vs, eps)

    dt_inner = eps**2
    dt_outer = outer_step_size(vs, grid, nu)
    search = min_inner_steps(vs, grid, eps, dt_inner, dt_outer, flux, k_max)
    closed = closed_form_k_bound(vs, grid, eps, dt_outer)
    r = eps / grid.dx
    regime = parameter_regime(vs, nu, r)
    logger.info(
        "advised dt=%.6g dt_outer=%.6g K=%s (closed-form bound %.4f, %s)",
        dt_inner,
        dt_outer,
        search.k,
        closed,
        regime,
    )
    if search.k is None:
        raise ConfigError(f"no K <= {k_max} stabilises nu={nu}, eps={eps}, dx={grid.dx}")
    if math.isfinite(closed) and math.ceil(closed - 1e-12) != search.k:
        logger.info("closed-form K bound %.4f differs from the mode check K=%d", closed, search.k)

    k = search.k
    dt_outer = max(dt_outer, (k + 1) * dt_inner)
    return Advice(
        inner=InnerParams(eps=eps, dt=dt_inner, flux=flux),
        projective=ProjectiveParams(dt_inner=dt_inner, k_inner=k, dt_outer=dt_outer, t_end=t_end),
        k_closed_form=closed,
        regime=regime,
        nu=nu,
        r=r,
    )
