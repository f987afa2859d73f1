from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np


@runtime_checkable
class MomentsProvider(Protocol):
    """Velocity measure that can average per-velocity data.

    Only the symmetric discrete space below implements it; continuous measures
    would plug in here with their own quadrature.
    """

    velocities: np.ndarray

    def moment(self, g: np.ndarray) -> float: ...

    def average(self, values: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class VelocitySpace:
    """Symmetric discrete velocities v_j = (2j-1)/(2p) with uniform weight 1/(2p).

    Velocities are stored as (v_p, ..., v_1, -v_1, ..., -v_p); every per-velocity
    array in the package uses this order.
    """

    p: int
    velocities: np.ndarray
    weight: float
    d_p: float
    v_max: float
    abs_mean: float

    @property
    def size(self) -> int:
        return 2 * self.p

    def moment(self, g: np.ndarray) -> float:
        return moment(self, g)

    def average(self, values: np.ndarray) -> np.ndarray:
        """Velocity average along the last axis (one value per cell for a 2D array)."""
        values = np.asarray(values)
        if values.shape[-1] != self.size:
            raise ValueError(f"expected {self.size} velocity entries, got {values.shape[-1]}")
        return _paired_sum(values, self.p) / self.size

    def closed_form_d(self) -> float:
        return (4 * self.p**2 - 1) / (12 * self.p**2)


def build(p: int) -> VelocitySpace:
    if int(p) != p or p < 1:
        raise ValueError(f"p must be a positive integer, got {p}")
    p = int(p)

    positive = (2.0 * np.arange(p, 0, -1) - 1.0) / (2.0 * p)
    velocities = np.concatenate([positive, -positive[::-1]])
    velocities.setflags(write=False)

    size = 2 * p
    d_p = float(np.sum(velocities**2) / size)
    abs_mean = float(np.sum(np.abs(velocities)) / size)
    return VelocitySpace(
        p=p,
        velocities=velocities,
        weight=1.0 / size,
        d_p=d_p,
        v_max=float(velocities[0]),
        abs_mean=abs_mean,
    )


def moment(vs: VelocitySpace, g: np.ndarray) -> float:
    """Average (1/2p) sum_j g_j of one per-velocity vector."""
    g = np.asarray(g, dtype=float)
    if g.shape != (vs.size,):
        raise ValueError(f"moment needs a vector of length {vs.size}, got shape {g.shape}")
    return float(_paired_sum(g, vs.p) / vs.size)


def _paired_sum(values: np.ndarray, p: int) -> np.ndarray:
    """Sum over the last axis, adding each velocity to its mirror -v first so odd moments vanish exactly."""
    return (values[..., :p] + values[..., ::-1][..., :p]).sum(axis=-1)
