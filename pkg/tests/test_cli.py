import json
import subprocess
import sys

import numpy as np
import pytest

from udnkit.cli import EXIT_DIVERGED, EXIT_OK, EXIT_SPEC, main
from udnkit.tensorio import read_tensor


def write_spec(tmp_path, payload, name="spec.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def base_spec(tmp_path, **kw):
    payload = {
        "modality": "2d-erasures", "H": 16, "W": 16, "K": 1,
        "scene": {"generator": "blobs"},
        "psf": {"generator": "caustic", "seed": 1},
        "mask": {"erase_fraction": 0.5, "seed": 2},
        "out_dir": str(tmp_path / "out"),
        "seed": 3,
    }
    payload.update(kw)
    return payload


class TestSimulate:
    def test_writes_measurement(self, tmp_path):
        spec = write_spec(tmp_path, base_spec(tmp_path))
        assert main(["simulate", "--spec", spec]) == EXIT_OK
        b = read_tensor(tmp_path / "out" / "measurement.udnt")
        assert b.shape == (16, 16)
        assert (tmp_path / "out" / "ground_truth.udnt").exists()
        assert (tmp_path / "out" / "psf.udnt").exists()

    def test_precision_flag_writes_f64(self, tmp_path):
        spec = write_spec(tmp_path, base_spec(tmp_path))
        assert main(["simulate", "--spec", spec, "--precision", "f64"]) == EXIT_OK
        assert read_tensor(tmp_path / "out" / "measurement.udnt").dtype == np.float64

    def test_out_and_seed_overrides(self, tmp_path):
        spec = write_spec(tmp_path, base_spec(tmp_path))
        out2 = str(tmp_path / "other")
        assert main(["simulate", "--spec", spec, "--out", out2,
                     "--seed", "9"]) == EXIT_OK
        b_override = read_tensor(tmp_path / "other" / "measurement.udnt")
        assert main(["simulate", "--spec", spec]) == EXIT_OK
        b_default = read_tensor(tmp_path / "out" / "measurement.udnt")
        assert not np.array_equal(b_override, b_default)

    def test_bad_spec_exit_2(self, tmp_path):
        spec = write_spec(tmp_path, {"modality": "bogus", "H": 8, "W": 8})
        assert main(["simulate", "--spec", spec]) == EXIT_SPEC

    def test_missing_spec_file_exit_2(self, tmp_path):
        assert main(["simulate", "--spec", str(tmp_path / "none.json")]) == EXIT_SPEC


class TestSolverCommands:
    def test_fista_then_evaluate_then_report(self, tmp_path):
        payload = base_spec(tmp_path, solvers={
            "fista": {"taus": [1e-4, 1e-3], "max_iters": 10}})
        spec = write_spec(tmp_path, payload)
        assert main(["fista", "--spec", spec]) == EXIT_OK
        assert main(["evaluate", "--spec", spec]) == EXIT_OK
        assert main(["report", "--spec", spec]) == EXIT_OK
        assert (tmp_path / "out" / "report" / "summary.csv").exists()

    def test_udn_runs(self, tmp_path):
        payload = base_spec(tmp_path, solvers={
            "udn": {"max_iters": 20, "snapshot_every": 10,
                    "arch": {"depth": 1, "channels": 6, "input_channels": 4,
                             "skip_channels": 2}}})
        spec = write_spec(tmp_path, payload)
        assert main(["udn", "--spec", spec]) == EXIT_OK
        assert (tmp_path / "out" / "udn_estimate.udnt").exists()
        trace = (tmp_path / "out" / "udn_trace.csv").read_text().splitlines()
        assert trace[0] == "iteration,train_loss,holdout_loss,seconds"
        assert len(trace) == 21

    def test_solver_missing_from_spec_exit_2(self, tmp_path):
        spec = write_spec(tmp_path, base_spec(tmp_path))
        assert main(["fista", "--spec", spec]) == EXIT_SPEC

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_exit_3(self, tmp_path):
        payload = base_spec(tmp_path, solvers={
            "fista": {"taus": [1e-4], "max_iters": 5, "lipschitz": 1e-13}})
        spec = write_spec(tmp_path, payload)
        assert main(["fista", "--spec", spec]) == EXIT_DIVERGED

    def test_report_without_records_exit_2(self, tmp_path):
        spec = write_spec(tmp_path, base_spec(tmp_path))
        assert main(["report", "--spec", spec]) == EXIT_SPEC


def test_console_entry_point(tmp_path):
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(base_spec(tmp_path)))
    proc = subprocess.run(
        [sys.executable, "-m", "udnkit.cli", "simulate", "--spec",
         str(spec_path), "--threads", "1"],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "wrote measurement" in proc.stdout
