import numpy as np
import pytest

from kinproj.diagnostics import hilbert_residual
from kinproj.errors import ConfigError, SolverDivergenceError
from kinproj.grid import (
    BoundaryCondition,
    Grid,
    KineticState,
    SuOlsonState,
    density,
    init_linear_benchmark,
    init_suolson,
    mass,
)
from kinproj.scheme import (
    FluxKind,
    InnerParams,
    advance_inner,
    check_mesh,
    default_source,
    phi,
    run_inner,
    run_to_times,
    step,
    step_linear,
    step_suolson,
)
from kinproj.spectral import mode_coefficients, mode_set, symbol, transport_symbol
from kinproj.velocity import build


def state_from(grid: Grid, p: int, f) -> KineticState:
    return KineticState(f=np.asarray(f, dtype=float), grid=grid, velocity=build(p))


def smooth_state(grid: Grid, p: int) -> KineticState:
    rho = 1.0 + 0.5 * np.cos(np.pi * grid.centers)
    return state_from(grid, p, np.repeat(rho[:, None], 2 * p, axis=1))


def test_phi_vanishes_on_constant_profiles():
    grid = Grid(-1.0, 1.0, 10)
    state = state_from(grid, 3, np.full((10, 6), 4.0))
    for kind in FluxKind:
        np.testing.assert_allclose(phi(state, kind), 0.0, atol=1e-14)


def test_phi_differentiates_linear_profile_at_interior_cells():
    grid = Grid(0.0, 1.0, 10, BoundaryCondition.NEUMANN)
    vs = build(2)
    f = np.repeat(grid.centers[:, None], vs.size, axis=1)
    state = KineticState(f=f, grid=grid, velocity=vs)
    for kind in FluxKind:
        values = phi(state, kind)[1:-1]
        np.testing.assert_allclose(values, np.broadcast_to(vs.velocities, values.shape), atol=1e-12)


def test_phi_matches_transport_symbol_on_a_cosine():
    grid = Grid(-1.0, 1.0, 16)
    vs = build(2)
    f = np.repeat(np.cos(2 * np.pi * grid.centers)[:, None], vs.size, axis=1)
    state = KineticState(f=f, grid=grid, velocity=vs)
    for kind in FluxKind:
        coeff = mode_coefficients(f)
        phi_coeff = mode_coefficients(phi(state, kind))
        for m, zeta in enumerate(mode_set(grid)):
            transport = transport_symbol(zeta, vs, grid.dx, kind)
            np.testing.assert_allclose(-phi_coeff[m], 1j * transport * coeff[m], atol=1e-10)


def test_constant_state_is_a_fixed_point():
    grid = Grid(-1.0, 1.0, 12)
    state = state_from(grid, 4, np.full((12, 8), 2.5))
    for kind in FluxKind:
        out = step_linear(state, InnerParams(eps=0.1, dt=0.01, flux=kind))
        np.testing.assert_allclose(out.f, state.f, atol=1e-14)
        assert out.t == pytest.approx(0.01)
        assert out.steps == 1


def test_dt_eps_squared_relaxes_to_equilibrium_in_one_step():
    grid = Grid(-1.0, 1.0, 6)
    rng = np.random.default_rng(1)
    row = rng.uniform(0.5, 1.5, size=8)
    state = state_from(grid, 4, np.tile(row, (6, 1)))
    out = step_linear(state, InnerParams(eps=0.1, dt=0.01))
    np.testing.assert_allclose(out.f, row.mean(), atol=1e-14)


def test_step_acts_mode_by_mode_as_the_amplification_symbol():
    grid = Grid(-1.0, 1.0, 16)
    vs = build(3)
    eps, dt = 0.1, 0.008
    rng = np.random.default_rng(7)
    f = rng.normal(size=(16, 6))
    state = KineticState(f=f, grid=grid, velocity=vs)
    for kind in FluxKind:
        out = step_linear(state, InnerParams(eps=eps, dt=dt, flux=kind))
        before = mode_coefficients(f)
        after = mode_coefficients(out.f)
        scale = max(1.0, float(np.abs(before).max()))
        for m, zeta in enumerate(mode_set(grid)):
            matrix = symbol(zeta, vs, eps, dt, grid.dx, kind).matrix
            np.testing.assert_allclose(after[m], matrix @ before[m], rtol=0, atol=1e-12 * scale)


def test_step_is_linear():
    grid = Grid(-1.0, 1.0, 10)
    vs = build(2)
    rng = np.random.default_rng(2)
    f, g = rng.normal(size=(2, 10, 4))
    params = InnerParams(eps=0.2, dt=0.03, flux=FluxKind.UPWIND)
    lhs = step_linear(KineticState(f=3.0 * f - g, grid=grid, velocity=vs), params).f
    rhs = 3.0 * step_linear(KineticState(f=f, grid=grid, velocity=vs), params).f - step_linear(
        KineticState(f=g, grid=grid, velocity=vs), params
    ).f
    np.testing.assert_allclose(lhs, rhs, atol=1e-13)


def test_non_finite_values_raise_divergence_with_step_index():
    grid = Grid(-1.0, 1.0, 4)
    f = np.ones((4, 2))
    f[1, 0] = np.nan
    with pytest.raises(SolverDivergenceError) as info:
        step_linear(state_from(grid, 1, f), InnerParams(eps=0.5, dt=0.1))
    assert info.value.step == 1


def test_suolson_equilibrium_without_source_is_unchanged():
    grid = Grid(-1.0, 30.0, 31, BoundaryCondition.NEUMANN)
    state = init_suolson(grid, build(4), 0.7)
    params = InnerParams(eps=0.05, dt=0.0025, source=np.zeros(31))
    out = step_suolson(state, params)
    np.testing.assert_allclose(out.kinetic.f, 0.7, rtol=1e-14)
    np.testing.assert_allclose(out.theta, 0.7, rtol=1e-14)


def test_suolson_without_coupling_reduces_to_linear_step():
    grid = Grid(-1.0, 1.0, 20, BoundaryCondition.NEUMANN)
    kinetic = init_linear_benchmark(grid, build(3))
    theta = np.linspace(0.0, 1.0, 20)
    params = InnerParams(eps=0.1, dt=0.01, sigma_a=0.0, source=np.zeros(20))
    out = step_suolson(SuOlsonState(kinetic=kinetic, theta=theta), params)
    np.testing.assert_allclose(out.kinetic.f, step_linear(kinetic, params).f, atol=1e-15)
    np.testing.assert_array_equal(out.theta, theta)


def test_suolson_first_step_adds_the_source():
    grid = Grid(-1.0, 30.0, 310, BoundaryCondition.NEUMANN)
    state = init_suolson(grid, build(10), 1.0)
    dt = 0.0025
    out = step(state, InnerParams(eps=0.05, dt=dt))
    source = default_source(grid)
    assert source.sum() == 10
    np.testing.assert_allclose(density(out), 1.0 + dt * source, rtol=1e-14)
    np.testing.assert_allclose(out.theta, 1.0, rtol=1e-15)


def test_run_inner_zero_steps_is_identity_and_two_steps_compose():
    grid = Grid(-1.0, 1.0, 20)
    state = init_linear_benchmark(grid, build(10))
    params = InnerParams(eps=0.05, dt=0.0025)
    assert run_inner(state, params, 0) is state
    twice = step(step(state, params), params)
    np.testing.assert_array_equal(run_inner(state, params, 2).f, twice.f)
    with pytest.raises(ValueError):
        run_inner(state, params, -1)


def test_mass_is_conserved_over_ten_thousand_steps():
    grid = Grid(-1.0, 1.0, 20)
    state = init_linear_benchmark(grid, build(10))
    out = run_inner(state, InnerParams(eps=0.05, dt=0.0025), 10_000)
    assert abs(mass(out) - mass(state)) <= 1e-12 * mass(state)
    assert out.t == pytest.approx(25.0)


def test_mass_is_conserved_to_benchmark_time():
    grid = Grid(-1.0, 1.0, 20)
    state = init_linear_benchmark(grid, build(10))
    out = advance_inner(state, InnerParams(eps=0.05, dt=0.0025), 2.5)
    assert out.t == 2.5
    assert abs(mass(out) - mass(state)) <= 1e-12 * mass(state)


def test_advance_inner_shortens_the_last_step():
    grid = Grid(-1.0, 1.0, 20)
    state = init_linear_benchmark(grid, build(4))
    out = advance_inner(state, InnerParams(eps=0.1, dt=0.01), 0.035)
    assert out.t == 0.035
    assert out.steps == 4


def test_run_to_times_records_each_snapshot():
    grid = Grid(-1.0, 1.0, 20)
    state = init_linear_benchmark(grid, build(4))
    trajectory = run_to_times(state, InnerParams(eps=0.1, dt=0.01), 0.1, (0.05, 0.1))
    assert sorted(trajectory.snapshots) == [0.05, 0.1]
    assert trajectory.snapshots[0.05].t == 0.05
    assert trajectory.final.t == 0.1
    assert len(trajectory.log) == 2


def test_inner_params_enforce_step_rules():
    with pytest.raises(ConfigError) as info:
        InnerParams(eps=0.1, dt=0.03)
    assert "2*eps^2" in str(info.value)
    with pytest.raises(ConfigError):
        InnerParams(eps=-1.0, dt=0.01)
    with pytest.raises(ConfigError):
        InnerParams(eps=1e-9, dt=1e-18)
    with pytest.raises(ConfigError):
        InnerParams(eps=0.1, dt=0.01, sigma_a=-1.0)


def test_mesh_bound_for_centered_flux():
    vs = build(10)
    check_mesh(Grid(-1.0, 1.0, 20), vs, 0.05)
    with pytest.raises(ConfigError) as info:
        check_mesh(Grid(-1.0, 1.0, 40), vs, 0.1)
    assert info.value.rule == "mesh bound dx >= v_max*eps"


def test_hilbert_residual_scales_like_eps_squared():
    grid = Grid(-1.0, 1.0, 20)
    ratios = []
    for eps in (0.05, 0.02, 0.01):
        out = run_inner(smooth_state(grid, 10), InnerParams(eps=eps, dt=eps**2), 3)
        ratios.append(hilbert_residual(out, eps) / eps**2)
    assert min(ratios) > 0
    assert max(ratios) <= 2.0 * min(ratios)
