"""
Unit tests for persistence of MDPs, traces and sweep directories.
"""

import tempfile
import unittest
from pathlib import Path

import numpy as np

from entac.mdp import make_gridworld
from entac.store import (
    TRACE_HEADER,
    SweepStore,
    fmt,
    load_mdp,
    read_trace_csv,
    save_mdp,
    write_csv,
)


class TestFiles(unittest.TestCase):
    """Test cases for the CSV and JSON helpers."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_fmt(self):
        self.assertEqual(fmt(0.1), "0.10000000000000001")
        self.assertEqual(fmt(np.float64(2.0)), "2")
        self.assertEqual(fmt(7), "7")
        self.assertEqual(fmt("exact"), "exact")

    def test_trace_csv_round_trip(self):
        rows = [[0, 0.5, 0.25, 1.0, 3.0, 0.5], [10, 0.75, 0.0, 0.1, 1e-30, 0.125]]
        path = write_csv(TRACE_HEADER, rows, self.dir / "nested" / "seed-0000.csv")
        columns = read_trace_csv(path)
        np.testing.assert_array_equal(columns["k"], [0, 10])
        self.assertEqual(columns["k"].dtype, np.int64)
        np.testing.assert_array_equal(columns["critic_mse"], [3.0, 1e-30])

    def test_trace_csv_rejects_bad_files(self):
        wrong_header = self.dir / "wrong.csv"
        wrong_header.write_text("k,value\n0,1\n")
        with self.assertRaisesRegex(ValueError, "expected header"):
            read_trace_csv(wrong_header)

        empty = write_csv(TRACE_HEADER, [], self.dir / "empty.csv")
        with self.assertRaisesRegex(ValueError, "no records"):
            read_trace_csv(empty)

        garbled = self.dir / "garbled.csv"
        garbled.write_text(",".join(TRACE_HEADER) + "\n0,x,0,0,0,0\n")
        with self.assertRaises(ValueError):
            read_trace_csv(garbled)

    def test_mdp_file(self):
        mdp = make_gridworld(2, 3, 0.9)
        loaded = load_mdp(save_mdp(mdp, self.dir / "grid.json"))
        np.testing.assert_array_equal(loaded.transition, mdp.transition)
        self.assertEqual(loaded.gamma, 0.9)

    def test_mdp_file_errors(self):
        with self.assertRaisesRegex(ValueError, "not found"):
            load_mdp(self.dir / "missing.json")
        bad = self.dir / "bad.json"
        bad.write_text("[1, 2]")
        with self.assertRaisesRegex(ValueError, "JSON object"):
            load_mdp(bad)


class TestSweepStore(unittest.TestCase):
    """Test cases for SweepStore."""

    def test_labels(self):
        self.assertEqual(SweepStore.label(16), "H-16")
        self.assertEqual(SweepStore.label(None), "exact")
        self.assertEqual(SweepStore.parse_label("H-16"), 16)
        self.assertIsNone(SweepStore.parse_label("exact"))
        with self.assertRaises(ValueError):
            SweepStore.parse_label("misc")

    def test_layout_and_discovery(self):
        with tempfile.TemporaryDirectory() as tmp:
            store = SweepStore(Path(tmp))
            self.assertEqual(store.discover_runs(), {})
            self.assertIsNone(store.read_manifest())
            self.assertEqual(store.run_csv("H-8", 3), Path(tmp) / "runs" / "H-8" / "seed-0003.csv")

            row = [[0, 0.5, 0.5, 0.0, 0.0, 0.25]]
            for seed in (1, 0):
                write_csv(TRACE_HEADER, row, store.run_csv("H-8", seed))
            (store.runs_dir / "H-4").mkdir()
            store.write_manifest({"J_star": 1.0})

            found = store.discover_runs()
            self.assertEqual(list(found), ["H-8"])
            self.assertEqual([p.name for p in found["H-8"]], ["seed-0000.csv", "seed-0001.csv"])
            self.assertEqual(store.read_manifest(), {"J_star": 1.0})


if __name__ == "__main__":
    unittest.main()
