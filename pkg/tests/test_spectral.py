import numpy as np
import pytest

from kinproj.grid import Grid
from kinproj.scheme import FluxKind
from kinproj.spectral import (
    build_report,
    check_stability,
    closed_form_k_bound,
    continuum_modes,
    dense_eigenvalues,
    eigenvalues,
    fast_disk_bound,
    match_distance,
    min_inner_steps,
    mode_set,
    mode_spectra,
    outer_amplification,
    predicted_dominant,
    projective_disks,
    secular_eigenvalues,
    symbol,
    verify_enclosures,
)
from kinproj.velocity import build

EPS = 0.01
DX = 0.05


def benchmark_grid() -> Grid:
    return Grid(-1.0, 1.0, 40)


def test_symbol_is_diagonal_plus_rank_one():
    vs = build(3)
    sym = symbol(0.7, vs, 0.1, 0.01, 0.1, FluxKind.CENTERED)
    off = sym.matrix - np.diag(np.diag(sym.matrix))
    np.testing.assert_allclose(off[~np.eye(6, dtype=bool)], sym.coupling / 6)
    np.testing.assert_allclose(np.diag(sym.matrix), sym.diagonal + sym.coupling / 6)


def test_zero_mode_has_one_unit_eigenvalue_and_a_damped_cluster():
    vs = build(10)
    sym = symbol(0.0, vs, EPS, EPS**2, DX, FluxKind.CENTERED)
    values = eigenvalues(sym)
    assert values[0] == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(values[1:], 0.0, atol=1e-12)


def test_secular_solver_agrees_with_dense_eigenvalues():
    for p in range(1, 9):
        vs = build(p)
        for kind in FluxKind:
            for zeta in np.linspace(0.0, 2 * np.pi, 13, endpoint=False):
                for dt in (EPS**2, 0.5 * EPS**2):
                    sym = symbol(zeta, vs, EPS, dt, DX, kind)
                    values, converged = secular_eigenvalues(sym)
                    assert converged
                    assert match_distance(values, dense_eigenvalues(sym)) <= 1e-10


def test_spectral_gap_at_every_grid_mode():
    vs = build(10)
    grid = benchmark_grid()
    dt = EPS**2
    for mode in mode_spectra(vs, grid, EPS, dt, FluxKind.CENTERED):
        inside = np.abs(mode.eigenvalues) <= 0.19 + 1e-12
        assert inside.sum() == 2 * vs.p - 1
        dominant = mode.eigenvalues[~inside]
        assert dominant.size == 1
        assert abs(dominant[0].imag) <= 1e-10
        expected = 1.0 - dt / DX**2 * np.sin(mode.zeta) ** 2 * vs.d_p
        assert abs(dominant[0].real - expected) <= 5e-3


def test_enclosures_hold_for_both_fluxes_and_both_steps():
    vs = build(10)
    grid = benchmark_grid()
    for kind in FluxKind:
        for dt in (EPS**2, 0.5 * EPS**2):
            result = verify_enclosures(mode_spectra(vs, grid, EPS, dt, kind))
            assert result.ok, (kind, dt, result.falsified)
            assert result.worst_imag <= 1e-10


def test_fast_disk_bound_radius():
    vs = build(10)
    center, radius = fast_disk_bound(vs, EPS, EPS**2, DX, FluxKind.CENTERED)
    assert center == pytest.approx(0.0)
    assert radius == pytest.approx(0.19)
    _, upwind = fast_disk_bound(vs, EPS, EPS**2, DX, FluxKind.UPWIND)
    assert upwind == pytest.approx(0.38)


def test_predicted_dominant_matches_centered_spectrum():
    vs = build(10)
    for zeta in continuum_modes(64):
        sym = symbol(zeta, vs, EPS, EPS**2, DX, FluxKind.CENTERED)
        expected = 1.0 - EPS**2 / DX**2 * np.sin(zeta) ** 2 * vs.d_p
        assert predicted_dominant(sym) == pytest.approx(expected, abs=1e-12)
        assert abs(eigenvalues(sym)[0].real - predicted_dominant(sym)) <= 5e-3


@pytest.mark.parametrize("kind", list(FluxKind))
def test_spectrum_is_closed_under_conjugation(kind):
    vs = build(10)
    for zeta in mode_set(benchmark_grid()):
        for dt in (EPS**2, 0.5 * EPS**2):
            values = eigenvalues(symbol(zeta, vs, EPS, dt, DX, kind))
            assert match_distance(values, np.conj(values)) <= 1e-10


def test_dominant_eigenvalue_error_shrinks_with_eps():
    vs = build(10)
    zetas = mode_set(benchmark_grid())
    ratios = []
    for eps in (1e-2, 5e-3, 2e-3):
        dt = eps**2
        worst = 0.0
        for zeta in zetas:
            dominant = eigenvalues(symbol(zeta, vs, eps, dt, DX, FluxKind.CENTERED))[0]
            expected = 1.0 - dt / DX**2 * np.sin(zeta) ** 2 * vs.d_p
            worst = max(worst, abs(dominant - expected))
        ratios.append(worst / (dt * eps))
    assert max(ratios) <= 50.0
    assert ratios[0] > ratios[1] > ratios[2]


@pytest.mark.parametrize("p", [2, 5, 10])
@pytest.mark.parametrize("r", [0.05, 0.1, 0.2])
def test_small_nu_needs_at_most_three_inner_steps(p, r):
    vs = build(p)
    grid = benchmark_grid()
    eps = r * DX
    for nu in (0.1, 0.25):
        search = min_inner_steps(vs, grid, eps, eps**2, nu * DX**2 / vs.d_p)
        assert search.k is not None
        assert search.k <= 3


def test_three_inner_steps_are_needed_at_nu_two():
    vs = build(10)
    grid = benchmark_grid()
    dt_outer = 2 * DX**2 / vs.d_p
    verdicts = [check_stability(vs, grid, EPS, EPS**2, dt_outer, k) for k in (1, 2, 3)]
    assert [v.stable for v in verdicts] == [False, False, True]
    assert verdicts[0].worst_amplification > 1.0 >= verdicts[2].worst_amplification - 1e-12


def test_minimal_outer_step_is_stable_with_one_inner_step():
    vs = build(10)
    grid = benchmark_grid()
    assert check_stability(vs, grid, EPS, EPS**2, 2 * EPS**2, 1).stable


def test_small_k_cannot_rescue_nu_beyond_two():
    vs = build(10)
    grid = benchmark_grid()
    dt_outer = 2.5 * DX**2 / vs.d_p
    for k in range(1, 6):
        verdict = check_stability(vs, grid, EPS, EPS**2, dt_outer, k)
        assert not verdict.stable


def test_dominant_eigenvalue_leaves_the_slow_disk_for_large_nu():
    vs = build(10)
    verdict = check_stability(vs, benchmark_grid(), EPS, EPS**2, 4 * DX**2 / vs.d_p, 3)
    assert not verdict.dominant_in_slow_disk


def test_closed_form_bound_at_the_minimal_k_parameters():
    vs = build(10)
    bound = closed_form_k_bound(vs, benchmark_grid(), EPS, 2 * DX**2 / vs.d_p)
    assert bound == pytest.approx(3.0186, abs=1e-3)


def test_min_inner_steps_search():
    vs = build(10)
    search = min_inner_steps(vs, benchmark_grid(), EPS, EPS**2, 2 * DX**2 / vs.d_p)
    assert search.k == 3
    assert [v.stable for v in search.verdicts] == [False, False, True]


def test_outer_amplification():
    assert outer_amplification(1.0, 0.01, 0.1, 3) == pytest.approx(1.0)
    assert outer_amplification(0.0, 0.01, 0.1, 3) == pytest.approx(0.0)
    # M = 6: (7 * 0.5 - 6) * 0.5^3
    assert outer_amplification(0.5, 0.01, 0.1, 3) == pytest.approx(-2.5 / 8)
    with pytest.raises(ValueError):
        outer_amplification(0.5, 0.01, 0.1, 0)


def test_projective_disks():
    (center, radius), fast = projective_disks(0.01, 0.1, 2)
    assert center == pytest.approx(0.9)
    assert radius == pytest.approx(0.1)
    assert fast == pytest.approx(0.1**0.5)


def test_mode_sets():
    grid = Grid(0.0, 1.0, 8)
    np.testing.assert_allclose(mode_set(grid), np.arange(8) * np.pi / 4)
    assert continuum_modes(100).size == 100


def test_match_distance_pairs_multisets():
    a = np.array([1.0, 2.0, 3.0j])
    assert match_distance(a, a[::-1]) == 0.0
    assert match_distance(a, np.array([3.0j, 2.1, 1.0])) == pytest.approx(0.1)


def test_build_report_carries_disks_and_verdicts():
    vs = build(10)
    grid = benchmark_grid()
    report = build_report(vs, grid, EPS, EPS**2, dt_outer=2 * DX**2 / vs.d_p)
    assert len(report.modes) == 40
    assert report.min_k == 3
    assert report.stable is True
    assert report.enclosures.ok
    assert report.disks.fast_radius == pytest.approx(0.19)
    assert report.disks.slow_pi_center == pytest.approx(1 - EPS**2 / (2 * DX**2 / vs.d_p))
    assert report.disks.fast_pi_radius == pytest.approx((EPS**2 / (2 * DX**2 / vs.d_p)) ** (1 / 3))
