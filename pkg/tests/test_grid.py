import numpy as np
import pytest

from kinproj.grid import (
    BoundaryCondition,
    Grid,
    KineticState,
    density,
    flux,
    init_linear_benchmark,
    init_suolson,
    mass,
)
from kinproj.velocity import build


def uniform_state(grid: Grid, p: int, values) -> KineticState:
    vs = build(p)
    f = np.broadcast_to(np.asarray(values, dtype=float), (grid.n_cells, vs.size)).copy()
    return KineticState(f=f, grid=grid, velocity=vs)


def test_grid_geometry():
    grid = Grid(-1.0, 1.0, 20)
    assert grid.dx == pytest.approx(0.1)
    assert grid.centers[0] == pytest.approx(-0.95)
    assert grid.centers[-1] == pytest.approx(0.95)
    assert np.all(np.diff(grid.centers) > 0)
    np.testing.assert_allclose(np.diff(grid.centers), 0.1)


def test_grid_rejects_bad_mesh():
    with pytest.raises(ValueError):
        Grid(0.0, 1.0, 0)
    with pytest.raises(ValueError):
        Grid(1.0, 1.0, 10)


def test_ghost_cells_wrap_or_copy():
    values = np.array([1.0, 2.0, 3.0])
    periodic = Grid(0.0, 1.0, 3, BoundaryCondition.PERIODIC)
    neumann = Grid(0.0, 1.0, 3, BoundaryCondition.NEUMANN)
    np.testing.assert_array_equal(periodic.pad(values), [3.0, 1.0, 2.0, 3.0, 1.0])
    np.testing.assert_array_equal(neumann.pad(values), [1.0, 1.0, 2.0, 3.0, 3.0])


def test_density_and_flux_examples():
    grid = Grid(-1.0, 1.0, 8)
    vs = build(10)
    ones = uniform_state(grid, 10, 1.0)
    np.testing.assert_allclose(density(ones), 1.0)
    np.testing.assert_allclose(flux(ones, 0.1), 0.0, atol=1e-15)

    odd = uniform_state(grid, 10, vs.velocities)
    np.testing.assert_allclose(density(odd), 0.0, atol=1e-15)
    np.testing.assert_allclose(flux(odd, 0.1), 3.325, rtol=1e-14)

    absolute = uniform_state(grid, 10, np.abs(vs.velocities))
    np.testing.assert_allclose(flux(absolute, 0.1), 0.0, atol=1e-15)


def test_flux_rejects_nonpositive_eps():
    state = uniform_state(Grid(-1.0, 1.0, 4), 2, 1.0)
    with pytest.raises(ValueError):
        flux(state, 0.0)


def test_density_is_linear():
    grid = Grid(-1.0, 1.0, 6)
    vs = build(3)
    rng = np.random.default_rng(0)
    f, g = rng.normal(size=(2, 6, 6))
    a = KineticState(f=f, grid=grid, velocity=vs)
    b = KineticState(f=g, grid=grid, velocity=vs)
    c = KineticState(f=2.0 * f + 0.5 * g, grid=grid, velocity=vs)
    np.testing.assert_allclose(density(c), 2.0 * density(a) + 0.5 * density(b), atol=1e-14)
    np.testing.assert_allclose(flux(c, 0.3), 2.0 * flux(a, 0.3) + 0.5 * flux(b, 0.3), atol=1e-13)


def test_state_shape_must_match_grid_and_velocities():
    with pytest.raises(ValueError):
        KineticState(f=np.ones((4, 3)), grid=Grid(0.0, 1.0, 4), velocity=build(2))


def test_linear_benchmark_cell_inside_square():
    grid = Grid(-1.0, 1.0, 21)
    state = init_linear_benchmark(grid, build(2))
    center = state.f[10]
    # velocities (0.75, 0.25, -0.25, -0.75); only 0.75 is outside [-0.75, 0.25]
    np.testing.assert_allclose(center, [1.0, 2.0, 2.0, 2.0])
    assert density(state)[10] == pytest.approx(1.75)


def test_linear_benchmark_far_cell_is_one():
    grid = Grid(-1.0, 1.0, 20)
    state = init_linear_benchmark(grid, build(10))
    assert grid.centers[18] == pytest.approx(0.85)
    np.testing.assert_allclose(state.f[18], 1.0)
    np.testing.assert_allclose(state.f[19], 1.0)


def test_linear_benchmark_straddling_cell_is_averaged():
    grid = Grid(-1.05, 1.05, 21)
    state = init_linear_benchmark(grid, build(2))
    assert grid.centers[15] == pytest.approx(0.5)
    np.testing.assert_allclose(state.f[15], [1.0, 1.5, 1.5, 1.5], atol=1e-12)


def test_linear_benchmark_needs_the_whole_square():
    with pytest.raises(ValueError):
        init_linear_benchmark(Grid(0.0, 1.0, 10), build(2))


def test_suolson_initial_state_is_flat():
    grid = Grid(-1.0, 30.0, 310, BoundaryCondition.NEUMANN)
    for a in (1.0, 1e-10):
        state = init_suolson(grid, build(10), a)
        np.testing.assert_array_equal(state.kinetic.f, a)
        np.testing.assert_array_equal(state.theta, a)
        np.testing.assert_allclose(density(state), a, rtol=1e-15)
        np.testing.assert_array_equal(flux(state, 0.05), 0.0)
    with pytest.raises(ValueError):
        init_suolson(grid, build(10), 0.0)


def test_mass_is_density_integral():
    grid = Grid(-1.0, 1.0, 20)
    state = uniform_state(grid, 4, 3.0)
    assert mass(state) == pytest.approx(6.0)
