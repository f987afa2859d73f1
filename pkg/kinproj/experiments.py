"""Experiment drivers behind the command line: single runs, spectra, stability
tables, convergence sweeps and the Su-Olson benchmark.

Every driver takes a validated RunConfig and a RunRecorder, writes its CSV files
into the recorder's output directory and stores headline numbers as results.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from multiprocessing import Pool
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np

from . import config
from .diagnostics import ErrorRecord, ReferenceCache, l2_error, limited_flux_margin, slope, state_errors
from .errors import CostCeilingError, SolverDivergenceError
from .grid import Grid, State, density, init_linear_benchmark, init_suolson
from .projective import ProjectiveParams, advise_params, run_projective
from .record import (
    RunRecorder,
    write_distribution,
    write_errors,
    write_heat_snapshot,
    write_run_log,
    write_snapshot,
    write_spectrum,
    write_stability,
    write_csv,
)
from .reference import (
    HeatParams,
    estimated_steps,
    heat_flux,
    heat_max_nu,
    kinetic_reference,
    reference_dt,
    run_heat,
)
from .runconfig import DtPolicy, Mode, Model, RunConfig, Sweep
from .scheme import InnerParams, run_to_times
from .spectral import (
    build_report,
    closed_form_k_bound,
    continuum_modes,
    min_inner_steps,
    mode_spectra,
    predicted_dominant,
    projective_disks,
    stability_from_spectra,
    symbol,
)
from .velocity import VelocitySpace

logger = logging.getLogger(__name__)

PROJECTIVE_NU_LIMIT = 2.0

T = TypeVar("T")
R = TypeVar("R")


def tag(t: float) -> str:
    return f"t{t:g}"


def parallel_map(fn: Callable[[T], R], items: Sequence[T], workers: int) -> List[R]:
    """Ordered map, through a process pool when more than one worker is configured."""
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with Pool(processes=min(workers, len(items))) as pool:
        return pool.map(fn, items)


# ------------------------------------------------------------------
# setup helpers
# ------------------------------------------------------------------


def source_values(cfg: RunConfig, grid: Grid) -> Optional[np.ndarray]:
    if cfg.model != Model.SUOLSON:
        return None
    spec = cfg.source
    if spec.cells is not None:
        return np.asarray(spec.cells, dtype=float)
    x = grid.centers
    inside = (x >= spec.lo - 1e-12) & (x <= spec.hi + 1e-12)
    return spec.value * inside.astype(float)


def initial_state(cfg: RunConfig, vs: VelocitySpace, grid: Grid, a: Optional[float] = None) -> State:
    if cfg.model == Model.SUOLSON:
        return init_suolson(grid, vs, cfg.a[0] if a is None else a)
    return init_linear_benchmark(grid, vs)


def inner_params(cfg: RunConfig, grid: Grid, eps: float, dt: float) -> InnerParams:
    return InnerParams(eps=eps, dt=dt, flux=cfg.flux, sigma_a=cfg.sigma_a, source=source_values(cfg, grid))


def projective_setup(
    cfg: RunConfig, vs: VelocitySpace, grid: Grid, eps: float, nu: float, t_end: float
) -> Tuple[InnerParams, ProjectiveParams]:
    """Explicit K from the config, or the advisor's dt = eps^2 and smallest stable K."""
    if cfg.k_inner is None:
        advice = advise_params(vs, grid, eps, nu, t_end, cfg.flux, cfg.k_max)
        inner = inner_params(cfg, grid, eps, advice.inner.dt)
        return inner, advice.projective
    dt = cfg.inner_dt(eps)
    pp = ProjectiveParams(
        dt_inner=dt,
        k_inner=cfg.k_inner,
        dt_outer=nu * grid.dx**2 / vs.d_p,
        t_end=t_end,
    )
    return inner_params(cfg, grid, eps, dt), pp


def reference_parts(cfg: RunConfig, eps: float, dt: float, t: float, a: Optional[float]) -> Dict[str, object]:
    parts: Dict[str, object] = {
        "model": cfg.model.value,
        "dt": dt,
        "grid": (cfg.x_left, cfg.x_right, cfg.n_cells, cfg.bc.value),
        "p": cfg.p,
        "eps": eps,
        "flux": cfg.flux.value,
        "t": t,
    }
    if cfg.model == Model.SUOLSON:
        parts.update(sigma_a=cfg.sigma_a, source=repr(cfg.source), a=a)
    return parts


@dataclass(frozen=True)
class ReferenceRun:
    eps: float
    a: Optional[float]
    policy: str
    dt: float
    snapshots: Dict[float, State]
    substituted: bool


def reference_snapshots(
    cfg: RunConfig,
    eps: float,
    times: Sequence[float],
    a: Optional[float] = None,
    allow_fallback: bool = True,
) -> ReferenceRun:
    """Fine-step reference at every time, from the cache when possible.

    When the configured step would exceed the cost ceiling, dt = eps^2 is used
    instead if allow_fallback is set.
    """
    vs, grid = cfg.velocity(), cfg.grid()
    cache = ReferenceCache(Path(cfg.output_dir) / "cache")
    policy = cfg.reference_policy.value
    substituted = False
    t_end = max(times)
    state0 = initial_state(cfg, vs, grid, a)

    dt = reference_dt(eps, policy, dt_scale=cfg.reference_dt_scale)
    cached = _cached_snapshots(cache, cfg, eps, dt, times, a, grid, vs)
    if cached is not None:
        return ReferenceRun(eps, a, policy, dt, cached, substituted)

    fallback = DtPolicy.EPS_SQUARED.value
    if allow_fallback and policy != fallback:
        over_ceiling = estimated_steps(state0.t, t_end, dt) > config.cost_ceiling(cfg.cost_ceiling)
        fallback_dt = reference_dt(eps, fallback, dt_scale=cfg.reference_dt_scale)
        cached = _cached_snapshots(cache, cfg, eps, fallback_dt, times, a, grid, vs) if over_ceiling else None
        if cached is not None:
            logger.warning("eps=%g: reference over the cost ceiling; using cached dt = eps^2 reference", eps)
            return ReferenceRun(eps, a, fallback, fallback_dt, cached, True)

    def integrate(policy: str):
        return kinetic_reference(
            state0,
            eps,
            t_end,
            flux=cfg.flux,
            policy=policy,
            dt_scale=cfg.reference_dt_scale,
            snapshot_times=times,
            cost_ceiling=cfg.cost_ceiling,
            sigma_a=cfg.sigma_a,
            source=source_values(cfg, grid),
        )

    try:
        trajectory = integrate(policy)
    except CostCeilingError as exc:
        if not allow_fallback or policy == DtPolicy.EPS_SQUARED.value:
            raise
        logger.warning("eps=%g: %s; using dt = eps^2 as the reference", eps, exc)
        policy, substituted = DtPolicy.EPS_SQUARED.value, True
        dt = reference_dt(eps, policy, dt_scale=cfg.reference_dt_scale)
        trajectory = integrate(policy)

    snapshots = {t: trajectory.snapshots[t] for t in times}
    for t, state in snapshots.items():
        cache.store(reference_parts(cfg, eps, dt, t, a), state)
    return ReferenceRun(eps, a, policy, dt, snapshots, substituted)


def _cached_snapshots(
    cache: ReferenceCache,
    cfg: RunConfig,
    eps: float,
    dt: float,
    times: Sequence[float],
    a: Optional[float],
    grid: Grid,
    vs: VelocitySpace,
) -> Optional[Dict[float, State]]:
    loaded = {t: cache.load(reference_parts(cfg, eps, dt, t, a), grid, vs) for t in times}
    if any(state is None for state in loaded.values()):
        return None
    return loaded  # type: ignore[return-value]


def _times(cfg: RunConfig) -> Tuple[float, ...]:
    return tuple(sorted(set(cfg.snapshot_times) | {cfg.t_end}))


def _write_trajectory(
    recorder: RunRecorder, label: str, snapshots: Dict[float, State], eps: float, with_f: bool
) -> None:
    for t in sorted(snapshots):
        recorder.add_file(write_snapshot(recorder.path(f"snapshot_{label}_{tag(t)}.csv"), snapshots[t], eps))
        if with_f:
            recorder.add_file(
                write_distribution(recorder.path(f"distribution_{label}_{tag(t)}.csv"), snapshots[t])
            )


# ------------------------------------------------------------------
# run
# ------------------------------------------------------------------


def _run_heat(cfg: RunConfig, recorder: RunRecorder, vs: VelocitySpace, grid: Grid) -> None:
    rho0 = density(initial_state(cfg, vs, grid))
    hp = HeatParams(diffusivity=vs.d_p, dt=cfg.heat_nu * grid.dx**2 / vs.d_p, grid=grid)
    trajectory = run_heat(rho0, hp, cfg.t_end, cfg.snapshot_times)
    for t, state in sorted(trajectory.snapshots.items()):
        path = recorder.path(f"snapshot_heat_{tag(t)}.csv")
        recorder.add_file(write_heat_snapshot(path, grid.centers, state.rho, heat_flux(state.rho, grid, vs.d_p)))
    recorder.set_result("heat_dt", hp.dt)


def _run_inner(cfg: RunConfig, recorder: RunRecorder, vs: VelocitySpace, grid: Grid) -> None:
    params = inner_params(cfg, grid, cfg.eps, cfg.inner_dt())
    trajectory = run_to_times(initial_state(cfg, vs, grid), params, cfg.t_end, cfg.snapshot_times)
    _write_trajectory(recorder, "inner", trajectory.snapshots, cfg.eps, cfg.write_distribution)
    recorder.add_file(write_run_log(recorder.path("runlog_inner.csv"), trajectory.log))
    recorder.set_result("inner_dt", params.dt)
    recorder.set_result("inner_steps", trajectory.final.steps)


def _run_projective(cfg: RunConfig, recorder: RunRecorder, vs: VelocitySpace, grid: Grid) -> None:
    inner, pp = projective_setup(cfg, vs, grid, cfg.eps, cfg.nu, cfg.t_end)
    logger.info("projective run: dt=%.6g K=%d dt_outer=%.6g", pp.dt_inner, pp.k_inner, pp.dt_outer)
    recorder.set_result("projective", {"dt_inner": pp.dt_inner, "k": pp.k_inner, "dt_outer": pp.dt_outer})
    trajectory = run_projective(initial_state(cfg, vs, grid), inner, pp, cfg.snapshot_times)
    _write_trajectory(recorder, "projective", trajectory.snapshots, cfg.eps, cfg.write_distribution)
    recorder.add_file(write_run_log(recorder.path("runlog_projective.csv"), trajectory.log))
    recorder.set_result("outer_steps", len(trajectory.log))


def _run_reference(
    cfg: RunConfig, recorder: RunRecorder, vs: VelocitySpace, grid: Grid, allow_fallback: bool
) -> None:
    run = reference_snapshots(cfg, cfg.eps, _times(cfg), cfg.a[0], allow_fallback=allow_fallback)
    _write_trajectory(recorder, "reference", run.snapshots, cfg.eps, cfg.write_distribution)
    recorder.set_result("reference_dt", run.dt)
    if run.substituted:
        recorder.add_note(f"eps={cfg.eps:g}: reference step eps^2 used instead of eps^3 (cost ceiling)")


def cmd_run(cfg: RunConfig, recorder: RunRecorder) -> None:
    vs, grid = cfg.velocity(), cfg.grid()
    logger.info("run: model=%s mode=%s eps=%g dx=%g", cfg.model.value, cfg.mode.value, cfg.eps, grid.dx)
    if cfg.mode == Mode.HEAT:
        _run_heat(cfg, recorder, vs, grid)
    elif cfg.mode == Mode.INNER:
        _run_inner(cfg, recorder, vs, grid)
    elif cfg.mode == Mode.PROJECTIVE:
        _run_projective(cfg, recorder, vs, grid)
    elif cfg.mode == Mode.REFERENCE:
        _run_reference(cfg, recorder, vs, grid, allow_fallback=False)
    else:
        _run_inner(cfg, recorder, vs, grid)
        _run_reference(cfg, recorder, vs, grid, allow_fallback=True)
        _run_projective(cfg, recorder, vs, grid)
        if cfg.model == Model.LINEAR:
            _run_heat(cfg, recorder, vs, grid)


# ------------------------------------------------------------------
# spectrum
# ------------------------------------------------------------------


def cmd_spectrum(cfg: RunConfig, recorder: RunRecorder) -> None:
    vs, grid = cfg.velocity(), cfg.grid()
    zetas = continuum_modes(cfg.continuum_modes) if cfg.continuum_modes else None
    dt_outer = cfg.dt_outer(vs)
    reports = {}
    for scale in cfg.spectrum_dt_scales:
        dt = scale * cfg.eps**2
        report = build_report(vs, grid, cfg.eps, dt, cfg.flux, dt_outer, cfg.k_inner, zetas, cfg.k_max)
        name = f"dt{scale:g}"
        recorder.add_file(write_spectrum(recorder.path(f"spectrum_{name}.csv"), report.modes))

        disks = report.disks
        rows = [("fast", disks.fast_center, disks.fast_radius)]
        if disks.slow_pi_center is not None:
            rows.append(("slow_projective", disks.slow_pi_center, disks.slow_pi_radius))
            rows.append(("fast_projective", 0.0, disks.fast_pi_radius))
        recorder.add_file(write_csv(recorder.path(f"disks_{name}.csv"), ("disk", "center", "radius"), rows))

        deviation = max(
            abs(m.dominant.real - predicted_dominant(symbol(m.zeta, vs, cfg.eps, dt, grid.dx, cfg.flux)))
            for m in report.modes
        )
        reports[name] = {
            "dt": dt,
            "enclosures_ok": report.enclosures.ok,
            "worst_margin": report.enclosures.worst_margin,
            "worst_zeta": report.enclosures.worst_zeta,
            "worst_dominant_imag": report.enclosures.worst_imag,
            "falsified_zetas": list(report.enclosures.falsified),
            "max_prediction_gap": deviation,
            "fallback_modes": sum(m.fallback for m in report.modes),
            "stable": report.stable,
            "min_k": report.min_k,
        }
        if not report.enclosures.ok:
            logger.warning("disk enclosure fails at %d modes (dt=%g)", len(report.enclosures.falsified), dt)
        logger.info("spectrum dt=%g: enclosures ok=%s, min K=%s", dt, report.enclosures.ok, report.min_k)
    recorder.set_result("spectra", reports)


# ------------------------------------------------------------------
# stability
# ------------------------------------------------------------------


def cmd_stability(cfg: RunConfig, recorder: RunRecorder) -> None:
    vs, grid = cfg.velocity(), cfg.grid()
    dt = cfg.inner_dt()
    dt_outer = cfg.dt_outer(vs)
    spectra = mode_spectra(vs, grid, cfg.eps, dt, cfg.flux)
    verdicts = [stability_from_spectra(spectra, dt, dt_outer, k) for k in cfg.stability_k]
    closed = closed_form_k_bound(vs, grid, cfg.eps, dt_outer)
    recorder.add_file(write_stability(recorder.path("stability.csv"), verdicts, closed))

    search = min_inner_steps(vs, grid, cfg.eps, dt, dt_outer, cfg.flux, cfg.k_max)
    recorder.set_result("verdicts", {str(v.k): v.stable for v in verdicts})
    recorder.set_result("min_k", search.k)
    recorder.set_result("closed_form_k", closed)
    recorder.set_result("dt_inner", dt)
    recorder.set_result("dt_outer", dt_outer)
    recorder.set_result("nu", cfg.nu)
    recorder.set_result("projective_nu_limit", PROJECTIVE_NU_LIMIT)
    recorder.set_result("heat_nu_limit", heat_max_nu())
    if search.k is not None:
        (center, radius), fast_radius = projective_disks(dt, dt_outer, search.k)
        recorder.set_result("slow_projective_disk", [center, radius])
        recorder.set_result("fast_projective_radius", fast_radius)
    if 0 < cfg.nu <= PROJECTIVE_NU_LIMIT:
        try:
            advice = advise_params(vs, grid, cfg.eps, cfg.nu, cfg.t_end, cfg.flux, cfg.k_max)
            recorder.set_result("regime", advice.regime)
            recorder.set_result("advised_k", advice.projective.k_inner)
        except ValueError as exc:
            recorder.add_note(f"no advice: {exc}")
    for v in verdicts:
        logger.info("K=%d stable=%s worst |amplification|=%.6g at zeta=%.4g", v.k, v.stable, v.worst_amplification, v.worst_zeta)
    logger.info("closed-form K bound %.4f, smallest stable K %s", closed, search.k)


# ------------------------------------------------------------------
# convergence sweeps
# ------------------------------------------------------------------


@dataclass(frozen=True)
class SweepPoint:
    cfg: RunConfig
    eps: float
    nu: float
    reference: Optional[ReferenceRun] = None


@dataclass(frozen=True)
class PointResult:
    eps: float
    nu: float
    dt_outer: float
    records: Tuple[ErrorRecord, ...]
    diverged: bool
    message: str = ""


def _reference_point(args: Tuple[RunConfig, float]) -> ReferenceRun:
    cfg, eps = args
    return reference_snapshots(cfg, eps, tuple(sorted(cfg.sweep_times)), cfg.a[0])


def _method_point(point: SweepPoint) -> PointResult:
    cfg = point.cfg
    vs, grid = cfg.velocity(), cfg.grid()
    times = tuple(sorted(cfg.sweep_times))
    state0 = initial_state(cfg, vs, grid)
    try:
        if cfg.mode == Mode.INNER:
            params = inner_params(cfg, grid, point.eps, cfg.inner_dt(point.eps))
            trajectory = run_to_times(state0, params, times[-1], times)
            dt_outer, label = params.dt, "inner"
        else:
            inner, pp = projective_setup(cfg, vs, grid, point.eps, point.nu, times[-1])
            trajectory = run_projective(state0, inner, pp, times)
            dt_outer, label = pp.dt_outer, f"projective_K{pp.k_inner}"
    except SolverDivergenceError as exc:
        logger.info("eps=%g nu=%g diverged: %s", point.eps, point.nu, exc)
        return PointResult(point.eps, point.nu, point.nu * grid.dx**2 / vs.d_p, (), True, str(exc))

    assert point.reference is not None
    records = tuple(
        state_errors(label, trajectory.snapshots[t], point.reference.snapshots[t], point.eps, dt_outer)
        for t in times
    )
    return PointResult(point.eps, point.nu, dt_outer, records, False)


def convergence_slopes(results: Iterable[PointResult], sweep: Sweep) -> Dict[str, float]:
    """Log-log slope of each error quantity per comparison time, diverged points left out."""
    by_time: Dict[float, List[ErrorRecord]] = {}
    for result in results:
        for record in result.records:
            by_time.setdefault(record.t, []).append(record)
    slopes: Dict[str, float] = {}
    for t, records in sorted(by_time.items()):
        xs = [r.eps if sweep == Sweep.EPS else r.dt_outer for r in records]
        for quantity in ("rho", "flux"):
            ys = [getattr(r, f"err_{quantity}") for r in records]
            if len(set(xs)) >= 2 and all(y > 0 for y in ys):
                slopes[f"{quantity}@{t:g}"] = slope(xs, ys)
    return slopes


def cmd_converge(cfg: RunConfig, recorder: RunRecorder) -> None:
    eps_values = cfg.sweep_eps or (cfg.eps,)
    nu_values = cfg.sweep_nu or (cfg.nu,)
    if cfg.sweep == Sweep.EPS:
        pairs = [(eps, cfg.nu) for eps in eps_values]
    else:
        pairs = [(cfg.eps, nu) for nu in nu_values]
    logger.info("converge: %s sweep over %d points, mode=%s", cfg.sweep.value, len(pairs), cfg.mode.value)

    distinct_eps = sorted({eps for eps, _ in pairs})
    references = parallel_map(_reference_point, [(cfg, eps) for eps in distinct_eps], cfg.workers)
    by_eps = {run.eps: run for run in references}
    for run in references:
        if run.substituted:
            recorder.add_note(f"eps={run.eps:g}: reference step eps^2 used instead of eps^3 (cost ceiling)")

    points = [SweepPoint(cfg, eps, nu, by_eps[eps]) for eps, nu in pairs]
    results = parallel_map(_method_point, points, cfg.workers)

    records = [r for result in results for r in result.records]
    recorder.add_file(write_errors(recorder.path("errors.csv"), records))
    slopes = convergence_slopes(results, cfg.sweep)
    rows = [(key.split("@")[1], key.split("@")[0], value) for key, value in slopes.items()]
    recorder.add_file(write_csv(recorder.path("slopes.csv"), ("t", "quantity", "slope"), rows))

    spread = {}
    for t in sorted({r.t for r in records}):
        errs = [r.err_rho for r in records if r.t == t]
        if errs and min(errs) > 0:
            spread[f"{t:g}"] = max(errs) / min(errs)
    recorder.set_result("slopes", slopes)
    recorder.set_result("rho_error_spread", spread)
    recorder.set_result("diverged", [{"eps": r.eps, "nu": r.nu, "message": r.message} for r in results if r.diverged])
    recorder.set_result("reference_policy", {f"{run.eps:g}": run.policy for run in references})
    for key, value in slopes.items():
        logger.info("slope %s = %.4f", key, value)


# ------------------------------------------------------------------
# Su-Olson
# ------------------------------------------------------------------


def _suolson_point(args: Tuple[RunConfig, float]) -> Dict[str, object]:
    cfg, a = args
    vs, grid = cfg.velocity(), cfg.grid()
    times = _times(cfg)
    reference = reference_snapshots(cfg, cfg.eps, times, a)

    full = run_to_times(
        initial_state(cfg, vs, grid, a), inner_params(cfg, grid, cfg.eps, cfg.eps**2), cfg.t_end, times
    )
    inner, pp = projective_setup(cfg, vs, grid, cfg.eps, cfg.nu, cfg.t_end)
    projective = run_projective(initial_state(cfg, vs, grid, a), inner, pp, times)

    records = []
    for t in times:
        ref = reference.snapshots[t]
        records.append(state_errors("full_fe", full.snapshots[t], ref, cfg.eps, full.dt_inner or 0.0))
        records.append(state_errors(f"projective_K{pp.k_inner}", projective.snapshots[t], ref, cfg.eps, pp.dt_outer))
    final_ref = reference.snapshots[cfg.t_end]
    theta_errors = {
        "full_fe": l2_error(full.final.theta, final_ref.theta, grid.dx),
        "projective": l2_error(projective.final.theta, final_ref.theta, grid.dx),
    }
    return {
        "a": a,
        "reference": reference,
        "theta_errors": theta_errors,
        "full": full.snapshots,
        "projective": projective.snapshots,
        "records": records,
        "k": pp.k_inner,
    }


def cmd_suolson(cfg: RunConfig, recorder: RunRecorder) -> None:
    cfg = replace(cfg, model=Model.SUOLSON)
    results = parallel_map(_suolson_point, [(cfg, a) for a in cfg.a], cfg.workers)
    all_records: List[ErrorRecord] = []
    summary = {}
    for result in results:
        a = result["a"]
        prefix = f"A{a:g}"
        snapshots = {
            "reference": result["reference"].snapshots,
            "full_fe": result["full"],
            "projective": result["projective"],
        }
        margins = {}
        for label, states in snapshots.items():
            _write_trajectory(recorder, f"{prefix}_{label}", states, cfg.eps, cfg.write_distribution)
            margins[label] = min(limited_flux_margin(s, cfg.eps) for s in states.values())
        records = result["records"]
        all_records.extend(replace(r, label=f"{prefix}_{r.label}") for r in records)
        final = [r for r in records if r.t == cfg.t_end]
        full_err = next(r.err_rho for r in final if r.label == "full_fe")
        pi_err = next(r.err_rho for r in final if r.label != "full_fe")
        summary[prefix] = {
            "k": result["k"],
            "err_rho_full_fe": full_err,
            "err_rho_projective": pi_err,
            "error_ratio": pi_err / full_err if full_err > 0 else float("inf"),
            "err_theta": result["theta_errors"],
            "limited_flux_margin": margins,
            "reference_policy": result["reference"].policy,
        }
        if result["reference"].substituted:
            recorder.add_note(f"{prefix}: reference step eps^2 used instead of eps^3 (cost ceiling)")
        logger.info("Su-Olson A=%g: projective/full error ratio %.3g", a, summary[prefix]["error_ratio"])
    recorder.add_file(write_errors(recorder.path("errors_suolson.csv"), all_records))
    recorder.set_result("suolson", summary)


COMMANDS = {
    "run": cmd_run,
    "spectrum": cmd_spectrum,
    "stability": cmd_stability,
    "converge": cmd_converge,
    "suolson": cmd_suolson,
}
