"""Von Neumann analysis of the forward Euler inner step and of projective forward Euler.

For a Fourier mode with nondimensional wavenumber zeta the inner step acts on the
2p velocity coefficients through

    A(zeta) = (1 - dt/eps^2) I + i (dt/eps) V(zeta) + (dt/eps^2) e e^T,

a diagonal matrix plus a rank-one coupling. Its eigenvalues are the roots of the
secular equation 1 = (dt/eps^2) (1/2p) sum_j 1 / (lambda - d_j), found here by
Aberth-Ehrlich simultaneous iteration on the characteristic polynomial with a
dense eigensolver as the oracle and fallback.

Mode coefficients use the convention c_m = sum_i g_i exp(+i zeta_m i), under which
the centered flux contributes +i (dt/eps) V_C.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy.optimize import linear_sum_assignment

from . import config
from .grid import Grid
from .scheme import FluxKind
from .velocity import VelocitySpace

logger = logging.getLogger(__name__)

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


@dataclass(frozen=True)
class SymbolMeta:
    eps: float
    dt: float
    dx: float
    flux: FluxKind
    p: int


@dataclass(frozen=True)
class AmplificationSymbol:
    zeta: float
    matrix: np.ndarray
    diagonal: np.ndarray  # diagonal of A without the rank-one part
    coupling: float       # dt / eps^2, weight of e e^T
    transport: np.ndarray # diagonal of V(zeta)
    meta: SymbolMeta

    @property
    def size(self) -> int:
        return self.diagonal.size


def transport_symbol(zeta: float, vs: VelocitySpace, dx: float, flux: FluxKind) -> np.ndarray:
    """Diagonal of V_C(zeta) or V_U(zeta) in the stored velocity order."""
    v = vs.velocities
    if FluxKind(flux) == FluxKind.CENTERED:
        return (math.sin(zeta) / dx) * v.astype(complex)
    phase = np.where(v > 0, np.exp(0.5j * zeta), np.exp(-0.5j * zeta))
    return (2.0 * math.sin(0.5 * zeta) / dx) * v * phase


def symbol(
    zeta: float,
    vs: VelocitySpace,
    eps: float,
    dt: float,
    dx: float,
    flux: FluxKind,
) -> AmplificationSymbol:
    if not (eps > 0 and dt > 0 and dx > 0):
        raise ValueError("eps, dt and dx must be positive")
    transport = transport_symbol(zeta, vs, dx, flux)
    coupling = dt / eps**2
    diagonal = (1.0 - coupling) + 1j * (dt / eps) * transport
    matrix = np.diag(diagonal) + coupling * np.full((vs.size, vs.size), 1.0 / vs.size)
    return AmplificationSymbol(
        zeta=float(zeta),
        matrix=matrix,
        diagonal=diagonal,
        coupling=coupling,
        transport=transport,
        meta=SymbolMeta(eps=eps, dt=dt, dx=dx, flux=FluxKind(flux), p=vs.p),
    )


def mode_set(grid: Grid) -> np.ndarray:
    """zeta_m = 2 pi m / N_x for the modes the periodic grid actually carries."""
    return 2.0 * np.pi * np.arange(grid.n_cells) / grid.n_cells


def continuum_modes(count: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(count) / count


def mode_coefficients(values: np.ndarray) -> np.ndarray:
    """c_m = sum_i g_i exp(+i zeta_m i) along axis 0."""
    n = values.shape[0]
    return n * np.fft.ifft(values, axis=0)


# ------------------------------------------------------------------
# eigenvalues
# ------------------------------------------------------------------


def dense_eigenvalues(sym: AmplificationSymbol) -> np.ndarray:
    return scipy.linalg.eigvals(sym.matrix)


def _deflate(diagonal: np.ndarray, weight: float) -> Tuple[np.ndarray, np.ndarray, List[complex]]:
    """Merge coinciding poles; each merged group of m poles leaves m-1 exact eigenvalues."""
    scale = max(1.0, float(np.abs(diagonal).max()))
    tol = config.DEFLATION_TOL * scale
    poles: List[complex] = []
    counts: List[int] = []
    members: List[List[complex]] = []
    for d in diagonal:
        for g, pole in enumerate(poles):
            if abs(d - pole) <= tol:
                counts[g] += 1
                members[g].append(d)
                break
        else:
            poles.append(complex(d))
            counts.append(1)
            members.append([complex(d)])
    deflated: List[complex] = []
    merged = []
    for group in members:
        centre = complex(np.mean(group))
        merged.append(centre)
        deflated.extend([centre] * (len(group) - 1))
    return np.array(merged), weight * np.array(counts, dtype=float), deflated


def _newton_ratio(z: np.ndarray, poles: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """chi/chi' for chi(z) = prod(z - d) * (1 - sum w / (z - d))."""
    inv = 1.0 / (z[:, None] - poles[None, :])
    s1 = inv.sum(axis=1)
    g = 1.0 - (weights[None, :] * inv).sum(axis=1)
    g_prime = (weights[None, :] * inv**2).sum(axis=1)
    return g / (s1 * g + g_prime)


def _aberth(poles: np.ndarray, weights: np.ndarray, seeds: np.ndarray) -> Tuple[np.ndarray, bool]:
    z = seeds.astype(complex).copy()
    n = z.size
    for _ in range(config.ABERTH_MAX_ITER):
        ratio = _newton_ratio(z, poles, weights)
        diff = z[:, None] - z[None, :]
        np.fill_diagonal(diff, 1.0)
        repulsion = 1.0 / diff
        np.fill_diagonal(repulsion, 0.0)
        correction = ratio / (1.0 - ratio * repulsion.sum(axis=1))
        if not np.isfinite(correction).all():
            return z, False
        z = z - correction
        if np.all(np.abs(correction) <= 4.0 * np.finfo(float).eps * np.maximum(1.0, np.abs(z))):
            return z, True
    ratio = _newton_ratio(z, poles, weights)
    converged = bool(np.all(np.abs(ratio) <= 1e-13 * np.maximum(1.0, np.abs(z)))) and n > 0
    return z, converged


def _seeds(poles: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """One seed at the decoupled slow limit, the rest just off the poles."""
    n = poles.size
    slow = complex(np.mean(poles) + weights.sum())
    if n == 1:
        return np.array([slow])
    spread = float(np.abs(poles - poles.mean()).max())
    offset = 1e-2 * max(spread, 1e-8 * max(1.0, abs(slow)))
    keep = np.argsort(-poles.real, kind="stable")[1:]
    angles = GOLDEN_ANGLE * (np.arange(n - 1) + 1)
    fast = poles[keep] + offset * np.exp(1j * angles)
    return np.concatenate([[slow], fast])


def secular_eigenvalues(sym: AmplificationSymbol) -> Tuple[np.ndarray, bool]:
    """Eigenvalues from the rank-one structure; the flag is False if the iteration failed."""
    poles, weights, deflated = _deflate(sym.diagonal, sym.coupling / sym.size)
    roots, converged = _aberth(poles, weights, _seeds(poles, weights))
    return np.concatenate([roots, np.array(deflated, dtype=complex)]), converged


def _sorted(values: np.ndarray) -> np.ndarray:
    order = np.lexsort((values.imag, -values.real))
    return values[order]


def eigenvalues(sym: AmplificationSymbol) -> np.ndarray:
    return solve_mode(sym).eigenvalues


def match_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Largest distance between two eigenvalue multisets under the best pairing."""
    cost = np.abs(np.asarray(a)[:, None] - np.asarray(b)[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max())


# ------------------------------------------------------------------
# disks and enclosures
# ------------------------------------------------------------------


def fast_disk(sym: AmplificationSymbol) -> Tuple[float, float]:
    """Disk holding the 2p-1 fast eigenvalues for this mode: center 1 - dt/eps^2."""
    shift = 1j * sym.transport
    radius = (sym.meta.dt / sym.meta.eps) * float(np.max(np.abs(shift.real) + np.abs(shift.imag)))
    return 1.0 - sym.coupling, radius


def fast_disk_bound(vs: VelocitySpace, eps: float, dt: float, dx: float, flux: FluxKind) -> Tuple[float, float]:
    """Mode-independent fast disk: radius (dt/(eps dx)) v_p centered, twice that upwind."""
    factor = 1.0 if FluxKind(flux) == FluxKind.CENTERED else 2.0
    return 1.0 - dt / eps**2, factor * dt * vs.v_max / (eps * dx)


def projective_disks(dt_inner: float, dt_outer: float, k: int) -> Tuple[Tuple[float, float], float]:
    """Limiting slow disk D(1 - dt/Dt, dt/Dt) and fast disk radius (dt/Dt)^(1/K)."""
    ratio = dt_inner / dt_outer
    return (1.0 - ratio, ratio), ratio ** (1.0 / k)


def predicted_dominant(sym: AmplificationSymbol) -> float:
    """Leading-order slow eigenvalue 1 + <a> dt/(2p eps) - dt/(4p^2) <a^2 + b^2 - <a>^2>."""
    p2 = sym.size
    eps, dt = sym.meta.eps, sym.meta.dt
    scaled = 1j * p2 * sym.transport  # D / eps
    alpha = scaled.real
    beta_sq = scaled.imag**2
    mean_alpha = alpha.mean()
    spread = np.mean(alpha**2 + beta_sq) - mean_alpha**2
    return float(1.0 + mean_alpha * dt / (p2 * eps) - dt / p2**2 * spread)


@dataclass(frozen=True)
class ModeSpectrum:
    zeta: float
    eigenvalues: np.ndarray
    dominant: complex
    fallback: bool
    fast_center: float
    fast_radius: float
    enclosure_ok: bool
    enclosure_margin: float


def _enclosure(values: np.ndarray, center: float, radius: float) -> Tuple[bool, float, complex]:
    """values sorted by decreasing real part; the first one is the dominant eigenvalue."""
    distance = np.abs(values - center)
    outside = int((distance > radius + config.DISK_TOL).sum())
    dominant = complex(values[0])
    others = distance[1:]
    margin = float(radius - others.max()) if others.size else float("inf")
    ok = (
        outside == 1
        and distance[0] > radius + config.DISK_TOL
        and abs(dominant.imag) <= config.REAL_TOL
    )
    return ok, margin, dominant


def solve_mode(sym: AmplificationSymbol) -> ModeSpectrum:
    values, converged = secular_eigenvalues(sym)
    fallback = not converged
    if fallback:
        logger.warning("secular iteration did not converge at zeta=%.6g; using the dense solver", sym.zeta)
        values = dense_eigenvalues(sym)
    values = _sorted(np.asarray(values, dtype=complex))
    center, radius = fast_disk(sym)
    ok, margin, dominant = _enclosure(values, center, radius)
    return ModeSpectrum(
        zeta=sym.zeta,
        eigenvalues=values,
        dominant=dominant,
        fallback=fallback,
        fast_center=center,
        fast_radius=radius,
        enclosure_ok=ok,
        enclosure_margin=margin,
    )


def mode_spectra(
    vs: VelocitySpace,
    grid: Grid,
    eps: float,
    dt: float,
    flux: FluxKind,
    zetas: Optional[Sequence[float]] = None,
) -> List[ModeSpectrum]:
    zetas = mode_set(grid) if zetas is None else zetas
    return [solve_mode(symbol(z, vs, eps, dt, grid.dx, flux)) for z in zetas]


@dataclass(frozen=True)
class EnclosureResult:
    ok: bool
    per_mode: Tuple[bool, ...]
    worst_margin: float
    worst_zeta: float
    worst_imag: float
    falsified: Tuple[float, ...]


def verify_enclosures(spectra: Sequence[ModeSpectrum]) -> EnclosureResult:
    """Exactly one eigenvalue outside the fast disk per mode, and that one real."""
    per_mode = tuple(m.enclosure_ok for m in spectra)
    worst = min(spectra, key=lambda m: m.enclosure_margin)
    return EnclosureResult(
        ok=all(per_mode),
        per_mode=per_mode,
        worst_margin=worst.enclosure_margin,
        worst_zeta=worst.zeta,
        worst_imag=max(abs(m.dominant.imag) for m in spectra),
        falsified=tuple(m.zeta for m in spectra if not m.enclosure_ok),
    )


# ------------------------------------------------------------------
# projective stability
# ------------------------------------------------------------------


def outer_amplification(lam, dt_inner: float, dt_outer: float, k: int):
    """[(M+1) lam - M] lam^K with M = (dt_outer - (K+1) dt_inner) / dt_inner."""
    if k < 1:
        raise ValueError(f"K must be at least 1, got {k}")
    m = (dt_outer - (k + 1) * dt_inner) / dt_inner
    lam = np.asarray(lam, dtype=complex)
    result = ((m + 1.0) * lam - m) * lam**k
    return complex(result) if result.ndim == 0 else result


@dataclass(frozen=True)
class StabilityVerdict:
    k: int
    stable: bool
    worst_zeta: float
    worst_amplification: float
    dominant_in_slow_disk: bool


def stability_from_spectra(
    spectra: Sequence[ModeSpectrum], dt_inner: float, dt_outer: float, k: int
) -> StabilityVerdict:
    worst_value = -1.0
    worst_zeta = 0.0
    slow_ok = True
    (slow_center, slow_radius), _ = projective_disks(dt_inner, dt_outer, k)
    for mode in spectra:
        amp = np.abs(outer_amplification(mode.eigenvalues, dt_inner, dt_outer, k))
        peak = float(amp.max())
        if peak > worst_value:
            worst_value, worst_zeta = peak, mode.zeta
        if abs(mode.dominant - slow_center) > slow_radius + config.DISK_TOL:
            slow_ok = False
    return StabilityVerdict(
        k=k,
        stable=worst_value <= 1.0 + config.STABILITY_SLACK,
        worst_zeta=worst_zeta,
        worst_amplification=worst_value,
        dominant_in_slow_disk=slow_ok,
    )


def check_stability(
    vs: VelocitySpace,
    grid: Grid,
    eps: float,
    dt_inner: float,
    dt_outer: float,
    k: int,
    flux: FluxKind = FluxKind.CENTERED,
) -> StabilityVerdict:
    spectra = mode_spectra(vs, grid, eps, dt_inner, flux)
    return stability_from_spectra(spectra, dt_inner, dt_outer, k)


def closed_form_k_bound(vs: VelocitySpace, grid: Grid, eps: float, dt_outer: float) -> float:
    """K >= 2 / (1 + log v_p / log r) + log(d_p / nu) / log(r v_p), r = eps/dx, nu = d_p dt_outer/dx^2."""
    r = eps / grid.dx
    nu = vs.d_p * dt_outer / grid.dx**2
    if r * vs.v_max >= 1.0 or r <= 0:
        return float("inf")
    if vs.v_max == 1.0 or r == 1.0:
        return float("inf")
    return 2.0 / (1.0 + math.log(vs.v_max) / math.log(r)) + math.log(vs.d_p / nu) / math.log(r * vs.v_max)


@dataclass(frozen=True)
class KSearch:
    k: Optional[int]
    closed_form: float
    verdicts: Tuple[StabilityVerdict, ...] = field(default_factory=tuple)


def min_inner_steps(
    vs: VelocitySpace,
    grid: Grid,
    eps: float,
    dt_inner: float,
    dt_outer: float,
    flux: FluxKind = FluxKind.CENTERED,
    k_max: int = config.DEFAULT_K_MAX,
) -> KSearch:
    """Smallest K in 1..k_max passing check_stability, with the closed-form bound alongside."""
    if k_max < 1:
        raise ValueError(f"k_max must be at least 1, got {k_max}")
    spectra = mode_spectra(vs, grid, eps, dt_inner, flux)
    closed = closed_form_k_bound(vs, grid, eps, dt_outer)
    verdicts: List[StabilityVerdict] = []
    for k in range(1, k_max + 1):
        if (k + 1) * dt_inner > dt_outer * (1.0 + 1e-12):
            break
        verdict = stability_from_spectra(spectra, dt_inner, dt_outer, k)
        verdicts.append(verdict)
        if verdict.stable:
            return KSearch(k=k, closed_form=closed, verdicts=tuple(verdicts))
    return KSearch(k=None, closed_form=closed, verdicts=tuple(verdicts))


# ------------------------------------------------------------------
# reports
# ------------------------------------------------------------------


@dataclass(frozen=True)
class SpectralDisks:
    slow_pi_center: Optional[float]
    slow_pi_radius: Optional[float]
    fast_pi_radius: Optional[float]
    fast_center: float
    fast_radius: float


@dataclass(frozen=True)
class SpectralReport:
    modes: Tuple[ModeSpectrum, ...]
    disks: SpectralDisks
    enclosures: EnclosureResult
    stable: Optional[bool]
    min_k: Optional[int]


def build_report(
    vs: VelocitySpace,
    grid: Grid,
    eps: float,
    dt_inner: float,
    flux: FluxKind = FluxKind.CENTERED,
    dt_outer: Optional[float] = None,
    k: Optional[int] = None,
    zetas: Optional[Sequence[float]] = None,
    k_max: int = config.DEFAULT_K_MAX,
) -> SpectralReport:
    spectra = mode_spectra(vs, grid, eps, dt_inner, flux, zetas)
    fast_center, fast_radius = fast_disk_bound(vs, eps, dt_inner, grid.dx, flux)
    slow_c = slow_r = fast_pi = None
    stable: Optional[bool] = None
    min_k: Optional[int] = None
    if dt_outer is not None:
        search = min_inner_steps(vs, grid, eps, dt_inner, dt_outer, flux, k_max)
        min_k = search.k
        k_used = k if k is not None else min_k
        if k_used is not None:
            (slow_c, slow_r), fast_pi = projective_disks(dt_inner, dt_outer, k_used)
            stable = stability_from_spectra(spectra, dt_inner, dt_outer, k_used).stable
    return SpectralReport(
        modes=tuple(spectra),
        disks=SpectralDisks(
            slow_pi_center=slow_c,
            slow_pi_radius=slow_r,
            fast_pi_radius=fast_pi,
            fast_center=fast_center,
            fast_radius=fast_radius,
        ),
        enclosures=verify_enclosures(spectra),
        stable=stable,
        min_k=min_k,
    )
