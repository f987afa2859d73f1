from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from .velocity import VelocitySpace


class BoundaryCondition(str, Enum):
    PERIODIC = "periodic"
    NEUMANN = "neumann"


@dataclass(frozen=True)
class Grid:
    """Uniform 1D cell mesh on [x_left, x_right] with a boundary-condition tag."""

    x_left: float
    x_right: float
    n_cells: int
    bc: BoundaryCondition = BoundaryCondition.PERIODIC

    def __post_init__(self) -> None:
        if self.n_cells < 1:
            raise ValueError(f"n_cells must be positive, got {self.n_cells}")
        if not self.x_right > self.x_left:
            raise ValueError(f"empty domain [{self.x_left}, {self.x_right}]")
        object.__setattr__(self, "bc", BoundaryCondition(self.bc))

    @property
    def length(self) -> float:
        return self.x_right - self.x_left

    @property
    def dx(self) -> float:
        return self.length / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return self.x_left + (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def edges(self) -> np.ndarray:
        return self.x_left + np.arange(self.n_cells + 1) * self.dx

    def pad(self, values: np.ndarray, width: int = 1) -> np.ndarray:
        """Add ghost cells along axis 0: wrap for periodic, copy the boundary cell for Neumann."""
        values = np.asarray(values)
        pad_width = [(width, width)] + [(0, 0)] * (values.ndim - 1)
        mode = "wrap" if self.bc == BoundaryCondition.PERIODIC else "edge"
        return np.pad(values, pad_width, mode=mode)

    def overlap_fraction(self, lo: float, hi: float) -> np.ndarray:
        """Fraction of each cell covered by [lo, hi]."""
        edges = self.edges
        covered = np.minimum(edges[1:], hi) - np.maximum(edges[:-1], lo)
        return np.clip(covered, 0.0, None) / self.dx


@dataclass(frozen=True)
class KineticState:
    """Cell averages f[i, j] over the grid and the velocity space at time t."""

    f: np.ndarray
    grid: Grid
    velocity: VelocitySpace
    t: float = 0.0
    steps: int = 0

    def __post_init__(self) -> None:
        expected = (self.grid.n_cells, self.velocity.size)
        if np.shape(self.f) != expected:
            raise ValueError(f"distribution shape {np.shape(self.f)} does not match {expected}")

    def with_values(self, f: np.ndarray, t: float, steps: Optional[int] = None) -> "KineticState":
        return replace(self, f=f, t=t, steps=self.steps + 1 if steps is None else steps)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.f).all())

    def max_abs(self) -> float:
        return float(np.abs(self.f).max())


@dataclass(frozen=True)
class SuOlsonState:
    """Kinetic part plus the material field theta = T^4, sharing the kinetic time."""

    kinetic: KineticState
    theta: np.ndarray

    def __post_init__(self) -> None:
        if np.shape(self.theta) != (self.kinetic.grid.n_cells,):
            raise ValueError(
                f"theta length {np.shape(self.theta)} does not match {self.kinetic.grid.n_cells} cells"
            )

    @property
    def t(self) -> float:
        return self.kinetic.t

    @property
    def steps(self) -> int:
        return self.kinetic.steps

    @property
    def grid(self) -> Grid:
        return self.kinetic.grid

    @property
    def velocity(self) -> VelocitySpace:
        return self.kinetic.velocity

    def is_finite(self) -> bool:
        return self.kinetic.is_finite() and bool(np.isfinite(self.theta).all())

    def max_abs(self) -> float:
        return max(self.kinetic.max_abs(), float(np.abs(self.theta).max()))


State = Union[KineticState, SuOlsonState]


def kinetic_part(state: State) -> KineticState:
    return state.kinetic if isinstance(state, SuOlsonState) else state


def density(state: State) -> np.ndarray:
    k = kinetic_part(state)
    return k.velocity.average(k.f)


def flux(state: State, eps: float) -> np.ndarray:
    """J = (1/eps) <v f> per cell."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    k = kinetic_part(state)
    return k.velocity.average(k.f * k.velocity.velocities) / eps


def mass(state: State) -> float:
    k = kinetic_part(state)
    return float(density(k).sum() * k.grid.dx)


def init_linear_benchmark(grid: Grid, vs: VelocitySpace) -> KineticState:
    """f = 2 on |x| <= 1/2 for -0.75 <= v <= 0.25, else 1, as exact cell averages."""
    if grid.x_left > -1.0 or grid.x_right < 1.0:
        raise ValueError("the linear benchmark needs a grid covering [-1, 1]")
    v = vs.velocities
    in_band = ((v >= -0.75 - 1e-12) & (v <= 0.25 + 1e-12)).astype(float)
    fraction = grid.overlap_fraction(-0.5, 0.5)
    f = 1.0 + np.outer(fraction, in_band)
    return KineticState(f=f, grid=grid, velocity=vs)


def init_suolson(grid: Grid, vs: VelocitySpace, a: float) -> SuOlsonState:
    if a <= 0:
        raise ValueError(f"initial level A must be positive, got {a}")
    f = np.full((grid.n_cells, vs.size), float(a))
    return SuOlsonState(
        kinetic=KineticState(f=f, grid=grid, velocity=vs),
        theta=np.full(grid.n_cells, float(a)),
    )


@dataclass(frozen=True)
class RunLogEntry:
    step: int
    t: float
    rho_min: float
    rho_max: float
    mass: float


def log_entry(step: int, state: State) -> RunLogEntry:
    rho = density(state)
    return RunLogEntry(
        step=step,
        t=state.t,
        rho_min=float(rho.min()),
        rho_max=float(rho.max()),
        mass=mass(state),
    )


@dataclass
class Trajectory:
    """Final state, snapshots at requested times and the per-outer-step run log."""

    snapshot_times: Tuple[float, ...] = ()
    snapshots: Dict[float, State] = field(default_factory=dict)
    log: List[RunLogEntry] = field(default_factory=list)
    final: Optional[State] = None
    dt_inner: Optional[float] = None

    def offer(self, state: State, tol: float) -> None:
        for target in self.snapshot_times:
            if target not in self.snapshots and abs(state.t - target) <= tol:
                self.snapshots[target] = state
