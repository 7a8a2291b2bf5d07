"""
H sweeps: per-H grid search of step sizes on pilot seeds, full seeded runs
at the selected step sizes, aggregate curves and summaries.
"""

from __future__ import annotations

import itertools
import logging
import math
import sys
from dataclasses import dataclass, replace
from multiprocessing import Pool
from pathlib import Path
from typing import Any, Iterable, Optional

import numpy as np

from .config import SweepSpec, TrainConfig
from .exact import constants_report, optimal_reg_values
from .mdp import TabularMdp, require_valid
from .modes import CriticMode
from .store import EXACT_LABEL, SweepStore, read_json, read_trace_csv
from .trainer import EntropyActorCritic, RunTrace

logger = logging.getLogger(__name__)


class SweepError(RuntimeError):
    """A sweep cannot be run or summarized (no runs, unwritable output)."""


@dataclass(frozen=True)
class Job:
    label: str
    H: Optional[int]
    config: TrainConfig
    mdp: TabularMdp
    j_star: float


@dataclass
class JobResult:
    job: Job
    trace: Optional[RunTrace] = None
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.trace is None or self.trace.aborted is not None

    @property
    def reason(self) -> str:
        if self.error is not None:
            return self.error
        return self.trace.aborted if self.trace is not None else "unknown"

    @property
    def final_objective(self) -> float:
        return self.trace.final.objective


def _run_job(job: Job) -> JobResult:
    try:
        trace = EntropyActorCritic(job.mdp, job.config, j_star=job.j_star).run()
    except Exception as e:
        return JobResult(job=job, error=f"{type(e).__name__}: {e}")
    return JobResult(job=job, trace=trace)


def _key(job: Job) -> tuple:
    c = job.config
    return job.label, c.eta_a, c.eta_c, c.seed


class SweepRunner:
    """
    Executes a SweepSpec. Jobs run in a process pool when threads > 1; every
    result is keyed by (label, step sizes, seed), so outputs do not depend on
    the schedule.
    """

    def __init__(self, spec: SweepSpec, threads: int = 1, out_dir: Optional[Path] = None) -> None:
        self.spec = spec
        self.threads = max(1, threads)
        self.store = SweepStore(Path(out_dir) if out_dir is not None else Path(spec.out_dir))
        self.mdp = spec.env.build(spec.gamma)
        require_valid(self.mdp)
        self.j_star = optimal_reg_values(self.mdp, spec.lam).j_star
        self._results: dict[tuple, JobResult] = {}

    def _labels(self) -> list[tuple[str, Optional[int]]]:
        labels: list[tuple[str, Optional[int]]] = [(SweepStore.label(H), H) for H in self.spec.H_list]
        if self.spec.include_exact_oracle:
            labels.append((EXACT_LABEL, None))
        return labels

    def _grid(self, H: Optional[int]) -> list[tuple[float, float]]:
        if H is None:
            # the exact critic has no critic step size
            return [(eta_a, self.spec.eta_c_grid[0]) for eta_a in self.spec.eta_a_grid]
        return list(itertools.product(self.spec.eta_a_grid, self.spec.eta_c_grid))

    def _job(self, label: str, H: Optional[int], eta_a: float, eta_c: float, i: int) -> Job:
        mode = CriticMode.EXACT_ORACLE if H is None else CriticMode.LEARNED
        config = self.spec.train_config(self.spec.seed(i), eta_a, eta_c, H=H or 1, critic_mode=mode)
        return Job(label=label, H=H, config=config, mdp=self.mdp, j_star=self.j_star)

    def _execute(self, jobs: list[Job]) -> list[JobResult]:
        pending = [job for job in jobs if _key(job) not in self._results]
        if self.threads > 1 and len(pending) > 1:
            with Pool(self.threads) as pool:
                results = pool.map(_run_job, pending)
        else:
            results = [_run_job(job) for job in pending]
        for result in results:
            self._results[_key(result.job)] = result
            if result.failed:
                logger.warning("job %s seed %d failed: %s", result.job.label, result.job.config.seed, result.reason)
        logger.info("finished %d jobs", len(results))
        return [self._results[_key(job)] for job in jobs]

    def _select(self) -> tuple[dict[str, tuple[float, float, float]], list[list[Any]]]:
        """Pilot grid search: best mean final objective per label, first grid point wins ties."""
        spec = self.spec
        n_pilot = min(spec.pilot_seeds, spec.n_seeds)
        labels = self._labels()
        jobs = [self._job(label, H, eta_a, eta_c, i)
                for label, H in labels
                for eta_a, eta_c in self._grid(H)
                for i in range(n_pilot)]
        self._execute(jobs)

        selected: dict[str, tuple[float, float, float]] = {}
        grid_rows: list[list[Any]] = []
        for label, H in labels:
            best: Optional[tuple[float, float, float]] = None
            for eta_a, eta_c in self._grid(H):
                results = [self._results[_key(self._job(label, H, eta_a, eta_c, i))] for i in range(n_pilot)]
                finals = [r.final_objective for r in results if not r.failed]
                mean = float(np.mean(finals)) if finals else -math.inf
                grid_rows.append([label if H is None else H, eta_a, eta_c, mean, len(finals)])
                if best is None or mean > best[2]:
                    best = (eta_a, eta_c, mean)
            selected[label] = best
            logger.info("%s: selected eta_a=%g eta_c=%g (pilot mean objective %.6g)", label, *best)
        return selected, grid_rows

    def run(self) -> dict[str, Any]:
        spec = self.spec
        try:
            self.store.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise SweepError(f"cannot create output directory {self.store.out_dir}: {e}") from e

        selected, grid_rows = self._select()
        jobs = [self._job(label, H, *selected[label][:2], i)
                for label, H in self._labels()
                for i in range(spec.n_seeds)]
        results = self._execute(jobs)

        failures = []
        try:
            for result in results:
                job = result.job
                if result.failed:
                    failures.append({"label": job.label, "seed": job.config.seed, "eta_a": job.config.eta_a,
                                     "eta_c": job.config.eta_c, "error": result.reason})
                    continue
                self.store.write_run(job.label, job.config.seed, result.trace)
            self.store.write_grid(grid_rows)
            self.store.write_manifest(self._manifest(selected, failures))
            self.store.write_aggregate(aggregate_rows(load_runs(self.store)[0]))
        except OSError as e:
            raise SweepError(f"cannot write sweep output to {self.store.out_dir}: {e}") from e

        summary = summarize(self.store.out_dir)
        self.store.write_summary(summary)
        return summary

    def _manifest(self, selected: dict[str, tuple[float, float, float]], failures: list[dict]) -> dict[str, Any]:
        tau_config = self.spec.train_config(self.spec.base_seed, 1.0, 1.0)
        tau = tau_config.resolve_tau(self.mdp)
        chosen = {}
        for label, H in self._labels():
            eta_a, eta_c, pilot_mean = selected[label]
            report = constants_report(self.mdp, self.spec.lam, tau, eta_a, eta_c, j_star=self.j_star)
            chosen[label] = {"H": H, "eta_a": eta_a, "eta_c": eta_c,
                             "pilot_mean_objective": pilot_mean if math.isfinite(pilot_mean) else None,
                             "constants": report.to_dict()}
        return {
            "sweep": self.spec.to_dict(),
            "J_star": self.j_star,
            "tau": tau.tau,
            "selected": chosen,
            "failures": failures,
        }


def run_sweep(spec: SweepSpec, threads: int = 1, out_dir: Optional[Path] = None) -> dict[str, Any]:
    """
    Run a sweep and write its directory.

    Returns:
        The summary document (also written to summary.json).

    Raises:
        SweepError: If the output directory cannot be written
    """
    return SweepRunner(spec, threads=threads, out_dir=out_dir).run()


def load_runs(store: SweepStore) -> tuple[dict[str, list[dict[str, np.ndarray]]], list[dict[str, str]]]:
    """
    Read every trace CSV in a sweep directory.

    Unreadable files are reported on stderr and returned as errors instead of
    raising.
    """
    runs: dict[str, list[dict[str, np.ndarray]]] = {}
    errors: list[dict[str, str]] = []
    for label, paths in store.discover_runs().items():
        for path in paths:
            try:
                SweepStore.parse_label(label)
                runs.setdefault(label, []).append(read_trace_csv(path))
            except (OSError, ValueError) as e:
                print(f"Warning: Failed to load {path}: {e}", file=sys.stderr)
                errors.append({"path": str(path), "error": str(e)})
    return runs, errors


def _label_order(label: str) -> tuple[int, int]:
    H = SweepStore.parse_label(label)
    return (1, 0) if H is None else (0, H)


def aggregate_rows(runs: dict[str, list[dict[str, np.ndarray]]]) -> list[list[Any]]:
    """Rows H,k,mean_objective,std_objective,n; std is the population std."""
    rows: list[list[Any]] = []
    for label in sorted(runs, key=_label_order):
        H = SweepStore.parse_label(label)
        by_k: dict[int, list[float]] = {}
        for columns in runs[label]:
            for k, objective in zip(columns["k"].tolist(), columns["objective"].tolist()):
                by_k.setdefault(k, []).append(objective)
        for k in sorted(by_k):
            values = np.array(by_k[k])
            rows.append([EXACT_LABEL if H is None else H, k, float(values.mean()), float(values.std()), len(values)])
    return rows


def _wall_times(store: SweepStore, label: str) -> list[float]:
    times = []
    for path in sorted((store.runs_dir / label).glob("seed-*.json")):
        try:
            times.append(float(read_json(path)["runtime_seconds"]))
        except (OSError, ValueError, KeyError, TypeError):
            continue
    return times


def summarize(out_dir: Path) -> dict[str, Any]:
    """
    Summary document of a sweep directory: per-H final mean and std, the
    selected grid point, J*, constants and wall times.

    Raises:
        SweepError: If the directory holds no runs
    """
    store = SweepStore(Path(out_dir))
    runs, errors = load_runs(store)
    if not runs:
        raise SweepError(f"no runs found in {store.out_dir}")
    manifest = store.read_manifest() or {}
    selected = manifest.get("selected", {})

    per_h: dict[str, Any] = {}
    for label in sorted(runs, key=_label_order):
        finals = np.array([columns["objective"][-1] for columns in runs[label]])
        final_k = max(int(columns["k"][-1]) for columns in runs[label])
        choice = selected.get(label, {})
        times = _wall_times(store, label)
        per_h[label] = {
            "H": SweepStore.parse_label(label),
            "n": int(finals.size),
            "final_k": final_k,
            "final_mean_objective": float(finals.mean()),
            "final_std_objective": float(finals.std()),
            "best_grid_point": {key: choice.get(key) for key in ("eta_a", "eta_c", "pilot_mean_objective")}
            if choice else None,
            "constants": choice.get("constants"),
            "mean_runtime_seconds": float(np.mean(times)) if times else None,
        }
    return {
        "out_dir": str(store.out_dir),
        "J_star": manifest.get("J_star"),
        "per_H": per_h,
        "failures": manifest.get("failures", []),
        "errors": errors,
    }


class SweepReport:
    """Prints a summary document as a fixed-width table."""

    LINE_LENGTH = 86

    def __init__(self, summary: dict[str, Any]) -> None:
        self.summary = summary

    def rows(self) -> Iterable[tuple[str, str, str, int, float, float, str]]:
        j_star = self.summary.get("J_star")
        for label, entry in self.summary["per_H"].items():
            best = entry.get("best_grid_point") or {}
            gap = "-" if j_star is None else f"{j_star - entry['final_mean_objective']:.3e}"
            yield (label,
                   "-" if best.get("eta_a") is None else f"{best['eta_a']:g}",
                   "-" if best.get("eta_c") is None or entry["H"] is None else f"{best['eta_c']:g}",
                   entry["n"], entry["final_mean_objective"], entry["final_std_objective"], gap)

    def print_report(self) -> None:
        print("=" * SweepReport.LINE_LENGTH)
        j_star = self.summary.get("J_star")
        print(f"Sweep summary: {self.summary['out_dir']}" + ("" if j_star is None else f"   J* = {j_star:.6f}"))
        print("=" * SweepReport.LINE_LENGTH)
        print(f"{'run':<8} | {'eta_a':>7} | {'eta_c':>7} | {'n':>4} | {'final mean':>12} | {'std':>10} | "
              f"{'J* - mean':>10}")
        print("-" * SweepReport.LINE_LENGTH)
        for label, eta_a, eta_c, n, mean, std, gap in self.rows():
            print(f"{label:<8} | {eta_a:>7} | {eta_c:>7} | {n:>4} | {mean:>12.6f} | {std:>10.3e} | {gap:>10}")
        for failure in self.summary.get("failures", []):
            print(f"failed: {failure['label']} seed {failure['seed']}: {failure['error']}")


def with_out_dir(spec: SweepSpec, out_dir: Optional[str]) -> SweepSpec:
    return spec if out_dir is None else replace(spec, out_dir=out_dir)
