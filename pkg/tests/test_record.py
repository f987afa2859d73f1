import json
import shutil
import uuid
from pathlib import Path

import numpy as np
import pytest

from kinproj.diagnostics import ErrorRecord
from kinproj.grid import Grid, init_linear_benchmark, init_suolson, log_entry
from kinproj.record import (
    RunRecorder,
    fmt,
    read_csv,
    write_csv,
    write_distribution,
    write_errors,
    write_run_log,
    write_snapshot,
    write_spectrum,
    write_stability,
)
from kinproj.scheme import FluxKind
from kinproj.spectral import check_stability, mode_spectra
from kinproj.velocity import build


def make_workspace_tmp() -> Path:
    path = Path("tmp") / "test_record" / uuid.uuid4().hex
    path.mkdir(parents=True, exist_ok=True)
    return path


def test_fmt_values():
    assert fmt(True) == "true"
    assert fmt(np.bool_(False)) == "false"
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(np.float64(2.0)) == "2"
    assert fmt(None) == ""
    assert fmt(3) == "3"


def test_linear_snapshot_columns_round_trip_exactly():
    workdir = make_workspace_tmp()
    try:
        grid = Grid(-1.0, 1.0, 20)
        state = init_linear_benchmark(grid, build(10))
        path = write_snapshot(workdir / "snap.csv", state, 0.05)
        text = path.read_text(encoding="utf-8")
        assert text.splitlines()[0] == "x,rho,J"
        assert "\r" not in text
        rows = read_csv(path)
        assert len(rows) == 20
        assert float(rows[0]["x"]) == grid.centers[0]
        assert list((workdir).glob("*.tmp")) == []
    finally:
        shutil.rmtree(workdir, ignore_errors=True)


def test_suolson_snapshot_has_theta_and_flux_ratio():
    workdir = make_workspace_tmp()
    try:
        grid = Grid(-1.0, 30.0, 310)
        state = init_suolson(grid, build(10), 1.0)
        rows = read_csv(write_snapshot(workdir / "snap.csv", state, 0.05))
        assert list(rows[0]) == ["x", "rho", "J", "theta", "eJ_over_rho"]
        assert float(rows[5]["theta"]) == 1.0
        assert float(rows[5]["eJ_over_rho"]) == 0.0
    finally:
        shutil.rmtree(workdir, ignore_errors=True)


def test_distribution_rows_cover_cells_and_velocities():
    workdir = make_workspace_tmp()
    try:
        grid = Grid(-1.0, 1.0, 4)
        state = init_linear_benchmark(grid, build(2))
        rows = read_csv(write_distribution(workdir / "dist.csv", state))
        assert len(rows) == 16
        assert [float(r["v"]) for r in rows[:4]] == [0.75, 0.25, -0.25, -0.75]
    finally:
        shutil.rmtree(workdir, ignore_errors=True)


def test_spectrum_and_stability_tables():
    workdir = make_workspace_tmp()
    try:
        vs = build(4)
        grid = Grid(-1.0, 1.0, 10)
        spectra = mode_spectra(vs, grid, 0.1, 0.01, FluxKind.CENTERED)
        rows = read_csv(write_spectrum(workdir / "spectrum.csv", spectra))
        assert len(rows) == 10 * 8
        assert sum(r["is_dominant"] == "true" for r in rows) == 10

        verdict = check_stability(vs, grid, 0.1, 0.01, 0.1, 3)
        rows = read_csv(write_stability(workdir / "stability.csv", [verdict], 3.2))
        assert rows[0]["K"] == "3"
        assert rows[0]["stable"] in ("true", "false")
        assert float(rows[0]["closed_form_k"]) == 3.2
    finally:
        shutil.rmtree(workdir, ignore_errors=True)


def test_error_and_run_log_tables():
    workdir = make_workspace_tmp()
    try:
        records = [ErrorRecord("projective", 0.02, 0.1, 0.03, 1.25, 1e-3, 2e-3)]
        rows = read_csv(write_errors(workdir / "errors.csv", records))
        assert rows[0]["label"] == "projective"
        assert float(rows[0]["err_flux"]) == 2e-3

        state = init_linear_benchmark(Grid(-1.0, 1.0, 20), build(10))
        rows = read_csv(write_run_log(workdir / "log.csv", [log_entry(0, state)]))
        assert list(rows[0]) == ["step", "t", "rho_min", "rho_max", "mass"]
        assert float(rows[0]["mass"]) == pytest.approx(2.0 + 11 / 20)
    finally:
        shutil.rmtree(workdir, ignore_errors=True)


def test_write_csv_creates_parent_directories():
    workdir = make_workspace_tmp()
    try:
        path = write_csv(workdir / "a" / "b.csv", ("k",), [(1,), (2,)])
        assert path.read_text(encoding="utf-8") == "k\n1\n2\n"
    finally:
        shutil.rmtree(workdir, ignore_errors=True)


def test_recorder_saves_and_loads_summary():
    workdir = make_workspace_tmp()
    try:
        recorder = RunRecorder("converge", workdir)
        recorder.add_file(recorder.path("errors.csv"))
        recorder.set_result("slopes", {"rho@1.25": np.float64(2.01)})
        recorder.set_result("diverged", [np.bool_(False)])
        recorder.set_result("worst", float("inf"))
        recorder.add_note("reference fell back to eps^2")
        path = recorder.save()

        data = json.loads(path.read_text(encoding="utf-8"))
        assert data["files"] == ["errors.csv"]
        assert data["results"]["worst"] == "inf"

        summary = RunRecorder.load(path)
        assert summary.command == "converge"
        assert summary.results["slopes"]["rho@1.25"] == pytest.approx(2.01)
        assert summary.results["diverged"] == [False]
        assert summary.notes == ["reference fell back to eps^2"]
    finally:
        shutil.rmtree(workdir, ignore_errors=True)
