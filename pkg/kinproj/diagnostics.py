from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Sequence

import numpy as np

from .grid import Grid, KineticState, State, SuOlsonState, density, flux, kinetic_part
from .scheme import FluxKind, phi
from .velocity import VelocitySpace

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ErrorRecord:
    label: str
    eps: float
    dx: float
    dt_outer: float
    t: float
    err_rho: float
    err_flux: float

    def __post_init__(self) -> None:
        for name in ("err_rho", "err_flux"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be finite and nonnegative, got {value}")


def l2_error(a: np.ndarray, b: np.ndarray, dx: float) -> float:
    """sqrt(dx * sum (a - b)^2)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(dx * np.sum((a - b) ** 2)))


def slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of log(y) against log(x)."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.size < 2:
        raise ValueError("slope needs at least two points")
    if (x <= 0).any() or (y <= 0).any():
        raise ValueError("slope needs strictly positive values")
    fitted, _ = np.polyfit(np.log(x), np.log(y), 1)
    return float(fitted)


def limited_flux_margin(state: State, eps: float) -> float:
    """min_i (v_max rho_i - eps |J_i|); negative where the flux bound is violated."""
    vs = kinetic_part(state).velocity
    rho = density(state)
    j = flux(state, eps)
    return float(np.min(vs.v_max * rho - eps * np.abs(j)))


def state_errors(label: str, state: State, ref: State, eps: float, dt_outer: float) -> ErrorRecord:
    grid = kinetic_part(state).grid
    return ErrorRecord(
        label=label,
        eps=eps,
        dx=grid.dx,
        dt_outer=dt_outer,
        t=state.t,
        err_rho=l2_error(density(state), density(ref), grid.dx),
        err_flux=l2_error(flux(state, eps), flux(ref, eps), grid.dx),
    )


def hilbert_residual(state: State, eps: float) -> float:
    """Weighted L2 norm over cells and velocities of f - rho + eps Phi(rho)."""
    k = kinetic_part(state)
    rho = density(k)
    equilibrium = KineticState(
        f=np.repeat(rho[:, None], k.velocity.size, axis=1),
        grid=k.grid,
        velocity=k.velocity,
        t=k.t,
    )
    residual = k.f - rho[:, None] + eps * phi(equilibrium, FluxKind.CENTERED)
    return float(np.sqrt(k.grid.dx * np.sum(residual**2) / k.velocity.size))


# ------------------------------------------------------------------
# reference cache
# ------------------------------------------------------------------


def cache_key(parts: Mapping[str, Any]) -> str:
    text = json.dumps({k: parts[k] for k in sorted(parts)}, default=repr, sort_keys=True)
    return hashlib.sha1(text.encode("utf-8")).hexdigest()


class ReferenceCache:
    """Reference snapshots on disk as .npz files named by a SHA-1 of their parameters."""

    def __init__(self, root: Path) -> None:
        self.root = Path(root)

    def path(self, parts: Mapping[str, Any]) -> Path:
        return self.root / f"{cache_key(parts)}.npz"

    def load(self, parts: Mapping[str, Any], grid: Grid, vs: VelocitySpace) -> Optional[State]:
        path = self.path(parts)
        if not path.exists():
            return None
        with np.load(path) as data:
            kinetic = KineticState(f=data["f"], grid=grid, velocity=vs, t=float(data["t"]))
            if "theta" in data.files:
                state: State = SuOlsonState(kinetic=kinetic, theta=data["theta"])
            else:
                state = kinetic
        logger.info("reference cache hit %s", path.name)
        return state

    def store(self, parts: Mapping[str, Any], state: State) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        path = self.path(parts)
        arrays: Dict[str, np.ndarray] = {"f": kinetic_part(state).f, "t": np.array(state.t)}
        if isinstance(state, SuOlsonState):
            arrays["theta"] = state.theta
        tmp = path.with_suffix(".tmp.npz")
        np.savez(tmp, **arrays)
        os.replace(tmp, path)
        return path
