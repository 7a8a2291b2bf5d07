"""
Persistence for MDPs, run traces and sweep results.

Floats are written with 17 significant digits so every file round-trips
exactly. Layout of a sweep directory:

    <out_dir>/manifest.json          sweep document and chosen step sizes
    <out_dir>/grid.csv               pilot objective of every grid point
    <out_dir>/runs/H-<H>/seed-<i>.csv
    <out_dir>/runs/exact/seed-<i>.csv
    <out_dir>/runs/<label>/seed-<i>.json   per-run summary
    <out_dir>/aggregate.csv          H,k,mean_objective,std_objective,n
    <out_dir>/summary.json
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import TYPE_CHECKING, Any, Iterable, Sequence

import numpy as np

from .mdp import InvalidMdpError, TabularMdp

if TYPE_CHECKING:
    from .trainer import RunTrace

TRACE_HEADER = ("k", "objective", "subopt", "grad_norm", "critic_mse", "policy_min")
AGGREGATE_HEADER = ("H", "k", "mean_objective", "std_objective", "n")
GRID_HEADER = ("H", "eta_a", "eta_c", "pilot_mean_objective", "n")
EXACT_LABEL = "exact"


def fmt(value: Any) -> str:
    """Render a CSV cell; floats get 17 significant digits."""
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_json(data: Any, output_path: Path) -> Path:
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    with output_path.open("w") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")
    return output_path


def read_json(path: Path) -> Any:
    with Path(path).open() as f:
        return json.load(f)


def write_csv(header: Sequence[str], rows: Iterable[Sequence[Any]], output_path: Path) -> Path:
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    with output_path.open("w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(cell) for cell in row])
    return output_path


def save_mdp(mdp: TabularMdp, output_path: Path) -> Path:
    return write_json(mdp.to_dict(), output_path)


def load_mdp(path: Path) -> TabularMdp:
    """
    Read an MDP document.

    Raises:
        InvalidMdpError: If the file is missing, not JSON or not a valid MDP document
    """
    try:
        data = read_json(path)
    except FileNotFoundError:
        raise InvalidMdpError(f"MDP file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise InvalidMdpError(f"MDP file {path} is not valid JSON: {e}") from None
    if not isinstance(data, dict):
        raise InvalidMdpError(f"MDP file {path} must hold a JSON object")
    return TabularMdp.from_dict(data)


def write_trace_csv(trace: RunTrace, output_path: Path) -> Path:
    """Per-record CSV; wall-clock time is left out so reruns are byte-identical."""
    return write_csv(TRACE_HEADER, (record.csv_row() for record in trace.records), output_path)


def read_trace_csv(path: Path) -> dict[str, np.ndarray]:
    """
    Columns of a trace CSV keyed by header name.

    Raises:
        ValueError: If the header is wrong or a row cannot be parsed
    """
    with Path(path).open(newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header) != TRACE_HEADER:
            raise ValueError(f"{path}: expected header {','.join(TRACE_HEADER)}")
        try:
            rows = [[float(cell) for cell in row] for row in reader if row]
        except ValueError as e:
            raise ValueError(f"{path}: {e}") from None
    if not rows:
        raise ValueError(f"{path}: no records")
    columns = np.array(rows).T
    out = {name: columns[i] for i, name in enumerate(TRACE_HEADER)}
    out["k"] = out["k"].astype(np.int64)
    return out


class SweepStore:
    """Paths and writers for one sweep output directory."""

    def __init__(self, out_dir: Path) -> None:
        self.out_dir = Path(out_dir)

    @property
    def runs_dir(self) -> Path:
        return self.out_dir / "runs"

    @staticmethod
    def label(H: int | None) -> str:
        return EXACT_LABEL if H is None else f"H-{H}"

    @staticmethod
    def parse_label(label: str) -> int | None:
        """
        Inverse of label().

        Raises:
            ValueError: If the label is neither "exact" nor "H-<int>"
        """
        if label == EXACT_LABEL:
            return None
        if not label.startswith("H-"):
            raise ValueError(f"unrecognized run directory {label!r}")
        return int(label[2:])

    def run_csv(self, label: str, seed: int) -> Path:
        return self.runs_dir / label / f"seed-{seed:04d}.csv"

    def write_run(self, label: str, seed: int, trace: RunTrace) -> Path:
        path = write_trace_csv(trace, self.run_csv(label, seed))
        write_json(trace.summary(), path.with_suffix(".json"))
        return path

    def write_manifest(self, manifest: dict[str, Any]) -> Path:
        return write_json(manifest, self.out_dir / "manifest.json")

    def read_manifest(self) -> dict[str, Any] | None:
        path = self.out_dir / "manifest.json"
        return read_json(path) if path.exists() else None

    def write_grid(self, rows: Iterable[Sequence[Any]]) -> Path:
        return write_csv(GRID_HEADER, rows, self.out_dir / "grid.csv")

    def write_aggregate(self, rows: Iterable[Sequence[Any]]) -> Path:
        return write_csv(AGGREGATE_HEADER, rows, self.out_dir / "aggregate.csv")

    def write_summary(self, summary: dict[str, Any]) -> Path:
        return write_json(summary, self.out_dir / "summary.json")

    def discover_runs(self) -> dict[str, list[Path]]:
        """Trace CSVs per run label, in sorted order."""
        found: dict[str, list[Path]] = {}
        if not self.runs_dir.is_dir():
            return found
        for run_dir in sorted(p for p in self.runs_dir.iterdir() if p.is_dir()):
            paths = sorted(run_dir.glob("seed-*.csv"))
            if paths:
                found[run_dir.name] = paths
        return found
