"""
Unit tests for sweeps: step-size selection, output layout and summaries.
"""

import contextlib
import io
import tempfile
import unittest
from dataclasses import replace
from pathlib import Path

import numpy as np

from entac.config import EnvSpec, SweepSpec
from entac.harness import SweepError, SweepReport, aggregate_rows, load_runs, run_sweep, summarize, with_out_dir
from entac.modes import EnvKind, TauMode
from entac.store import SweepStore, read_json, read_trace_csv


def tiny_spec(**overrides) -> SweepSpec:
    spec = SweepSpec(
        H_list=[2], eta_a_grid=[0.05, 0.5], eta_c_grid=[0.1], lam=0.1, n_seeds=2, K=6, gamma=0.8,
        env=EnvSpec(kind=EnvKind.SYNTHETIC, n_states=2, n_actions=2, seed=3), eval_every=2, pilot_seeds=1,
    )
    return replace(spec, **overrides)


class TestRunSweep(unittest.TestCase):
    """Test cases for run_sweep()."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_output_layout(self):
        summary = run_sweep(tiny_spec(), out_dir=self.dir / "sweep")
        out = self.dir / "sweep"
        for name in ("manifest.json", "grid.csv", "aggregate.csv", "summary.json"):
            self.assertTrue((out / name).is_file(), name)
        for label in ("H-2", "exact"):
            self.assertEqual(sorted(p.name for p in (out / "runs" / label).glob("*.csv")),
                             ["seed-0000.csv", "seed-0001.csv"])
            columns = read_trace_csv(out / "runs" / label / "seed-0000.csv")
            np.testing.assert_array_equal(columns["k"], [0, 2, 4, 6])

        self.assertEqual(list(summary["per_H"]), ["H-2", "exact"])
        self.assertEqual(summary["per_H"]["H-2"]["n"], 2)
        self.assertEqual(summary["per_H"]["H-2"]["final_k"], 6)
        self.assertEqual(read_json(out / "summary.json"), summary)

        manifest = read_json(out / "manifest.json")
        self.assertEqual(set(manifest["selected"]), {"H-2", "exact"})
        self.assertIn(manifest["selected"]["H-2"]["eta_a"], [0.05, 0.5])
        self.assertEqual(manifest["failures"], [])

    def test_grid_has_a_row_per_point(self):
        run_sweep(tiny_spec(), out_dir=self.dir)
        lines = (self.dir / "grid.csv").read_text().splitlines()
        self.assertEqual(lines[0], "H,eta_a,eta_c,pilot_mean_objective,n")
        # two points for H=2, two eta_a values for the exact critic
        self.assertEqual(len(lines), 1 + 2 + 2)

    def test_reproducible_across_process_counts(self):
        run_sweep(tiny_spec(), threads=1, out_dir=self.dir / "serial")
        run_sweep(tiny_spec(), threads=2, out_dir=self.dir / "parallel")
        for name in ("aggregate.csv", "grid.csv", "runs/H-2/seed-0001.csv", "runs/exact/seed-0000.csv"):
            self.assertEqual((self.dir / "serial" / name).read_bytes(), (self.dir / "parallel" / name).read_bytes(),
                             name)

    def test_single_seed_has_zero_std(self):
        summary = run_sweep(tiny_spec(n_seeds=1, include_exact_oracle=False), out_dir=self.dir)
        self.assertEqual(list(summary["per_H"]), ["H-2"])
        self.assertEqual(summary["per_H"]["H-2"]["final_std_objective"], 0.0)
        lines = (self.dir / "aggregate.csv").read_text().splitlines()
        self.assertEqual(lines[0], "H,k,mean_objective,std_objective,n")
        self.assertTrue(all(line.split(",")[3] == "0" for line in lines[1:]))

    def test_failed_runs_are_recorded(self):
        spec = tiny_spec(eta_a_grid=[1e308], eta_c_grid=[1.0], tau_mode=TauMode.DISABLED,
                         include_exact_oracle=False)
        with np.errstate(over="ignore", invalid="ignore"):
            try:
                summary = run_sweep(spec, out_dir=self.dir)
            except SweepError:
                summary = None
        manifest = read_json(self.dir / "manifest.json")
        self.assertEqual(len(manifest["failures"]) + len(list((self.dir / "runs").glob("*/*.csv"))), 2)
        if summary is not None:
            self.assertEqual(summary["failures"], manifest["failures"])


class TestSummaries(unittest.TestCase):
    """Test cases for summarize() and the aggregate rows."""

    def test_with_out_dir(self):
        spec = tiny_spec()
        self.assertIs(with_out_dir(spec, None), spec)
        self.assertEqual(with_out_dir(spec, "elsewhere").out_dir, "elsewhere")

    def test_empty_directory(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaisesRegex(SweepError, "no runs found"):
                summarize(Path(tmp))

    def test_aggregate_population_std(self):
        runs = {
            "H-8": [{"k": np.array([0, 5]), "objective": np.array([1.0, 2.0])},
                    {"k": np.array([0, 5]), "objective": np.array([3.0, 2.0])}],
            "exact": [{"k": np.array([0]), "objective": np.array([4.0])}],
            "H-16": [{"k": np.array([0]), "objective": np.array([0.5])}],
        }
        rows = aggregate_rows(runs)
        self.assertEqual(rows, [
            [8, 0, 2.0, 1.0, 2],
            [8, 5, 2.0, 0.0, 2],
            [16, 0, 0.5, 0.0, 1],
            ["exact", 0, 4.0, 0.0, 1],
        ])

    def test_unreadable_run_is_reported(self):
        with tempfile.TemporaryDirectory() as tmp:
            run_sweep(tiny_spec(include_exact_oracle=False), out_dir=Path(tmp))
            store = SweepStore(Path(tmp))
            store.run_csv("H-2", 1).write_text("garbage\n")
            stderr = io.StringIO()
            with contextlib.redirect_stderr(stderr):
                runs, errors = load_runs(store)
                summary = summarize(Path(tmp))
        self.assertEqual(len(runs["H-2"]), 1)
        self.assertEqual(len(errors), 1)
        self.assertIn("Warning: Failed to load", stderr.getvalue())
        self.assertEqual(summary["per_H"]["H-2"]["n"], 1)

    def test_report_prints_every_run(self):
        with tempfile.TemporaryDirectory() as tmp:
            summary = run_sweep(tiny_spec(), out_dir=Path(tmp))
        stdout = io.StringIO()
        with contextlib.redirect_stdout(stdout):
            SweepReport(summary).print_report()
        text = stdout.getvalue()
        self.assertIn("Sweep summary", text)
        self.assertIn("H-2", text)
        self.assertIn("exact", text)


if __name__ == "__main__":
    unittest.main()
