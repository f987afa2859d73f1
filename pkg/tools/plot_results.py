"""Plot the CSV files a kinproj command wrote into its output directory.

Run from the project root after a command has finished:

    python -m kinproj spectrum --config configs/spectrum_centered.cfg
    python tools/plot_results.py outputs/spectrum_centered

One PNG is written next to the CSVs for every table type found:

    snapshots.png   density profiles of every snapshot_*.csv at each time
    spectrum_*.png  eigenvalues per mode with the fast / projective disks
    errors.png      log-log error curves from errors.csv
    stability.png   worst outer amplification against K
"""

from __future__ import annotations

import argparse
import sys
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

PROJECT_ROOT = Path(__file__).resolve().parents[1]
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from kinproj.record import read_csv  # noqa: E402


def _column(rows: list[dict[str, str]], key: str) -> np.ndarray:
    return np.array([float(r[key]) for r in rows])


def plot_snapshots(out_dir: Path) -> Path | None:
    by_time: dict[str, list[Path]] = defaultdict(list)
    for path in sorted(out_dir.glob("snapshot_*.csv")):
        time_tag = path.stem.rpartition("_")[2]
        by_time[time_tag].append(path)
    if not by_time:
        return None

    fig, axes = plt.subplots(1, len(by_time), figsize=(5 * len(by_time), 4), squeeze=False)
    for ax, (time_tag, paths) in zip(axes[0], sorted(by_time.items())):
        for path in paths:
            rows = read_csv(path)
            label = path.stem.removeprefix("snapshot_").rpartition("_")[0]
            ax.plot(_column(rows, "x"), _column(rows, "rho"), label=label)
        ax.set_title(time_tag.replace("t", "t = ", 1))
        ax.set_xlabel("x")
        ax.set_ylabel("rho")
        ax.legend(fontsize="small")
    return _save(fig, out_dir / "snapshots.png")


def plot_spectrum(path: Path) -> Path:
    rows = read_csv(path)
    re, im = _column(rows, "re"), _column(rows, "im")
    dominant = np.array([r["is_dominant"] == "true" for r in rows])

    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(re[~dominant], im[~dominant], s=6, label="fast")
    ax.scatter(re[dominant], im[dominant], s=10, marker="x", label="dominant")
    disks = path.with_name(path.name.replace("spectrum_", "disks_"))
    if disks.exists():
        angle = np.linspace(0.0, 2.0 * np.pi, 200)
        for disk in read_csv(disks):
            center, radius = float(disk["center"]), float(disk["radius"])
            ax.plot(center + radius * np.cos(angle), radius * np.sin(angle), "--", linewidth=0.8, label=disk["disk"])
    ax.set_aspect("equal")
    ax.set_xlabel("Re")
    ax.set_ylabel("Im")
    ax.legend(fontsize="small")
    return _save(fig, path.with_suffix(".png"))


def plot_errors(out_dir: Path) -> Path | None:
    path = out_dir / "errors.csv"
    if not path.exists():
        return None
    rows = read_csv(path)
    use_eps = len({r["eps"] for r in rows}) > 1
    x_key = "eps" if use_eps else "dt_outer"

    curves: dict[str, list[dict[str, str]]] = defaultdict(list)
    for row in rows:
        curves[f"{row['label']} t={float(row['t']):g}"].append(row)

    fig, ax = plt.subplots(figsize=(6, 4))
    for name, points in sorted(curves.items()):
        points.sort(key=lambda r: float(r[x_key]))
        ax.loglog(_column(points, x_key), _column(points, "err_rho"), "o-", label=name)
    ax.set_xlabel(x_key)
    ax.set_ylabel("L2 error in rho")
    ax.legend(fontsize="small")
    return _save(fig, out_dir / "errors.png")


def plot_stability(out_dir: Path) -> Path | None:
    path = out_dir / "stability.csv"
    if not path.exists():
        return None
    rows = read_csv(path)
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.semilogy(_column(rows, "K"), _column(rows, "worst_amplification"), "o-")
    ax.axhline(1.0, color="grey", linewidth=0.8)
    ax.set_xlabel("K")
    ax.set_ylabel("max |outer amplification|")
    return _save(fig, out_dir / "stability.png")


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def run_plots(args: argparse.Namespace) -> int:
    out_dir = Path(args.output_dir)
    if not out_dir.is_dir():
        print(f"not a directory: {out_dir}", file=sys.stderr)
        return 2

    written = [plot_snapshots(out_dir), plot_errors(out_dir), plot_stability(out_dir)]
    written += [plot_spectrum(path) for path in sorted(out_dir.glob("spectrum_*.csv"))]
    written = [path for path in written if path is not None]
    for path in written:
        print(f"wrote {path}")
    if not written:
        print(f"no kinproj tables found in {out_dir}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Plot kinproj result tables.")
    parser.add_argument("output_dir", help="directory a kinproj command wrote into")
    return parser


def main() -> None:
    raise SystemExit(run_plots(build_parser().parse_args()))


if __name__ == "__main__":
    main()
