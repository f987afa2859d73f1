from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from . import config
from .diagnostics import ErrorRecord
from .grid import RunLogEntry, State, SuOlsonState, density, flux, kinetic_part
from .spectral import ModeSpectrum, StabilityVerdict


def fmt(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format(float(value), config.CSV_FLOAT_FORMAT)
    if value is None:
        return ""
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """Write through a temp file and rename so readers never see a partial table."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    os.replace(tmp, path)
    return path


def read_csv(path: Path) -> List[Dict[str, str]]:
    with Path(path).open(encoding="utf-8", newline="") as handle:
        return list(csv.DictReader(handle))


def write_snapshot(path: Path, state: State, eps: float) -> Path:
    k = kinetic_part(state)
    rho = density(state)
    j = flux(state, eps)
    x = k.grid.centers
    if isinstance(state, SuOlsonState):
        ratio = np.divide(eps * j, rho, out=np.zeros_like(rho), where=rho != 0)
        rows = zip(x, rho, j, state.theta, ratio)
        return write_csv(path, ("x", "rho", "J", "theta", "eJ_over_rho"), rows)
    return write_csv(path, ("x", "rho", "J"), zip(x, rho, j))


def write_heat_snapshot(path: Path, x: np.ndarray, rho: np.ndarray, j: np.ndarray) -> Path:
    return write_csv(path, ("x", "rho", "J"), zip(x, rho, j))


def write_distribution(path: Path, state: State) -> Path:
    k = kinetic_part(state)
    x = k.grid.centers
    v = k.velocity.velocities
    rows = ((x[i], v[j], k.f[i, j]) for i in range(x.size) for j in range(v.size))
    return write_csv(path, ("x", "v", "f"), rows)


def write_spectrum(path: Path, modes: Sequence[ModeSpectrum]) -> Path:
    def rows():
        for mode in modes:
            for index, lam in enumerate(mode.eigenvalues):
                yield mode.zeta, lam.real, lam.imag, index == 0

    return write_csv(path, ("zeta", "re", "im", "is_dominant"), rows())


def write_stability(
    path: Path, verdicts: Sequence[StabilityVerdict], closed_form_k: float
) -> Path:
    rows = (
        (v.k, v.stable, v.worst_zeta, v.worst_amplification, closed_form_k, v.dominant_in_slow_disk)
        for v in verdicts
    )
    header = ("K", "stable", "worst_zeta", "worst_amplification", "closed_form_k", "dominant_in_slow_disk")
    return write_csv(path, header, rows)


def write_errors(path: Path, records: Sequence[ErrorRecord]) -> Path:
    rows = ((r.label, r.eps, r.dx, r.dt_outer, r.t, r.err_rho, r.err_flux) for r in records)
    return write_csv(path, ("label", "eps", "dx", "dt_outer", "t", "err_rho", "err_flux"), rows)


def write_run_log(path: Path, entries: Sequence[RunLogEntry]) -> Path:
    rows = ((e.step, e.t, e.rho_min, e.rho_max, e.mass) for e in entries)
    return write_csv(path, ("step", "t", "rho_min", "rho_max", "mass"), rows)


@dataclass
class RunSummary:
    command: str
    output_dir: str
    files: List[str] = field(default_factory=list)
    results: Dict[str, Any] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)


class RunRecorder:
    """Collects written files and headline results; saves them as summary.json."""

    def __init__(self, command: str, output_dir: Path) -> None:
        self.output_dir = Path(output_dir)
        self._summary = RunSummary(command=command, output_dir=str(self.output_dir))

    def path(self, name: str) -> Path:
        return self.output_dir / name

    def add_file(self, path: Path) -> Path:
        self._summary.files.append(Path(path).relative_to(self.output_dir).as_posix())
        return path

    def set_result(self, key: str, value: Any) -> None:
        self._summary.results[key] = _plain(value)

    def add_note(self, text: str) -> None:
        self._summary.notes.append(text)

    @property
    def files(self) -> List[str]:
        return list(self._summary.files)

    @property
    def results(self) -> Dict[str, Any]:
        return dict(self._summary.results)

    @property
    def notes(self) -> List[str]:
        return list(self._summary.notes)

    def to_dict(self) -> dict:
        return asdict(self._summary)

    def save(self, name: str = "summary.json") -> Path:
        path = self.path(name)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(json.dumps(self.to_dict(), ensure_ascii=False, indent=2), encoding="utf-8")
        os.replace(tmp, path)
        return path

    @staticmethod
    def load(path: Path) -> RunSummary:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return RunSummary(
            command=data["command"],
            output_dir=data["output_dir"],
            files=list(data.get("files", [])),
            results=dict(data.get("results", {})),
            notes=list(data.get("notes", [])),
        )


def _plain(value: Any) -> Optional[Any]:
    """JSON-friendly copy: numpy scalars become floats, non-finite floats become strings."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if np.isfinite(value) else str(value)
    return value
