"""Command-line front end: configs, outputs, exit codes, determinism."""

from __future__ import annotations

import json
import math
import shutil
import subprocess

import numpy as np
import pytest

from rgpairing import analysis, cli, solver

ROOT2 = math.sqrt(0.5)

TWO_LEVEL = {"levels": [0.0, 1.0], "pairs": 1, "coupling": 0.5}


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def parse_csv(path):
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    rows = [dict(zip(header, ln.split(","))) for ln in lines[1:]]
    return rows


class TestSolve:
    def test_worked_example(self, tmp_path):
        cfg = write_config(tmp_path, TWO_LEVEL)
        out = tmp_path / "roots.csv"
        assert cli.main(["solve", "--config", cfg, "--out", str(out)]) == 0
        rows = parse_csv(out)
        roots = [r for r in rows if r["kind"] == "root"]
        assert len(roots) == 1
        assert abs(float(roots[0]["real"]) + ROOT2) <= 1e-9
        assert abs(float(roots[0]["imag"])) <= 1e-12
        energy = next(r for r in rows if r["kind"] == "energy")
        assert abs(float(energy["real"]) + ROOT2) <= 1e-9
        gaudin = [float(r["real"]) for r in rows if r["kind"] == "gaudin"]
        assert abs(gaudin[0] + 1.9142135623730951) <= 1e-9
        assert abs(gaudin[1] + 0.08578643762690495) <= 1e-9

    def test_excited_label(self, tmp_path):
        cfg = write_config(tmp_path, dict(TWO_LEVEL, label=[1]))
        out = tmp_path / "roots.csv"
        assert cli.main(["solve", "--config", cfg, "--out", str(out)]) == 0
        roots = [r for r in parse_csv(out) if r["kind"] == "root"]
        assert abs(float(roots[0]["real"]) - ROOT2) <= 1e-9

    def test_empty_sector(self, tmp_path):
        cfg = write_config(tmp_path, dict(TWO_LEVEL, pairs=0))
        out = tmp_path / "roots.csv"
        assert cli.main(["solve", "--config", cfg, "--out", str(out)]) == 0
        rows = parse_csv(out)
        assert not [r for r in rows if r["kind"] == "root"]
        energy = next(r for r in rows if r["kind"] == "energy")
        assert float(energy["real"]) == 0.0

    def test_reruns_are_byte_identical(self, tmp_path):
        cfg = write_config(tmp_path, TWO_LEVEL)
        out_a, out_b = tmp_path / "a.csv", tmp_path / "b.csv"
        cli.main(["solve", "--config", cfg, "--out", str(out_a)])
        cli.main(["solve", "--config", cfg, "--out", str(out_b)])
        assert out_a.read_bytes() == out_b.read_bytes()

    def test_config_errors_exit_one(self, tmp_path):
        assert cli.main(["solve"]) == 1
        assert cli.main(["solve", "--config", str(tmp_path / "missing.json")]) == 1
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert cli.main(["solve", "--config", str(bad)]) == 1
        dup = write_config(tmp_path, dict(TWO_LEVEL, levels=[1.0, 1.0]))
        assert cli.main(["solve", "--config", dup]) == 1
        label = write_config(tmp_path, dict(TWO_LEVEL, label=[0, 1]))
        assert cli.main(["solve", "--config", label]) == 1

    def test_solver_failure_exits_two_with_dump(self, tmp_path, monkeypatch):
        def boom(model, label=None, schedule=None):
            raise solver.ConvergenceError("forced failure",
                                          np.array([0.1 + 0.2j]))

        monkeypatch.setattr(cli.solver, "continue_in_g", boom)
        cfg = write_config(tmp_path, TWO_LEVEL)
        out = tmp_path / "roots.csv"
        assert cli.main(["solve", "--config", cfg, "--out", str(out)]) == 2
        rows = parse_csv(out)
        assert rows[0]["kind"] == "last_iterate"
        assert abs(float(rows[0]["real"]) - 0.1) <= 1e-15


class TestCorrelate:
    def test_worked_example_values(self, tmp_path):
        cfg = write_config(tmp_path, TWO_LEVEL)
        out = tmp_path / "corr.csv"
        assert cli.main(["correlate", "--config", cfg, "--out", str(out)]) == 0
        rows = parse_csv(out)

        def value(name, i, j):
            row = next(r for r in rows if r["correlator"] == name
                       and r["i"] == str(i) and r["j"] == str(j))
            return float(row["value"])

        assert abs(value("occupation", 0, 0) - 0.85355) <= 1e-5
        assert abs(value("occupation", 1, 1) - 0.14645) <= 1e-5
        assert abs(value("pair_transfer", 1, 0) - 0.35355) <= 1e-5
        assert abs(value("spin_spin", 0, 1) - 0.41421) <= 1e-5
        assert abs(value("pairing", 0, 0) - 1.70711) <= 1e-5
        summary = json.loads((tmp_path / "corr.json").read_text())
        assert summary["conservation_residual"] <= 1e-10
        assert summary["energy_identity_residual"] <= 1e-9
        assert abs(summary["energy"] + ROOT2) <= 1e-9

    def test_reruns_are_byte_identical(self, tmp_path):
        cfg = write_config(tmp_path, {"levels": [0.0, 0.5, 1.1, 1.9],
                                      "pairs": 2, "coupling": 0.7})
        out_a, out_b = tmp_path / "a.csv", tmp_path / "b.csv"
        cli.main(["correlate", "--config", cfg, "--out", str(out_a)])
        cli.main(["correlate", "--config", cfg, "--out", str(out_b)])
        assert out_a.read_bytes() == out_b.read_bytes()
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_unsupported_degeneracies_exit_two(self, tmp_path):
        cfg = write_config(tmp_path, {"levels": [0.0, 1.0], "pairs": 1,
                                      "coupling": 0.5, "degeneracies": [2, 1]})
        assert cli.main(["correlate", "--config", cfg,
                         "--out", str(tmp_path / "c.csv")]) == 2


class TestVerify:
    def test_default_suite_passes(self, tmp_path):
        out = tmp_path / "verify.log"
        assert cli.main(["verify", "--seed", "42", "--out", str(out)]) == 0
        text = out.read_text()
        assert "checks=16 failed=0" in text
        assert "FAIL" not in text
        assert "oracle.spectrum" in text
        assert "sixvertex.fbasis" in text
        assert "kz.stationarity" in text
        assert "continuum.gap_closed_form" in text

    def test_group_selection(self, tmp_path):
        out = tmp_path / "verify.log"
        assert cli.main(["verify", "--continuum", "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[-1] == "checks=1 failed=0"
        assert lines[0].startswith("PASS continuum.gap_closed_form")

    def test_unreachable_tolerance_exits_three(self, tmp_path):
        out = tmp_path / "verify.log"
        code = cli.main(["verify", "--sixvertex", "--tol", "1e-30",
                         "--out", str(out)])
        assert code == 3
        assert "FAIL" in out.read_text()

    def test_numerical_failure_exits_two(self, tmp_path, monkeypatch):
        def boom(model, label=None, schedule=None):
            raise solver.SolverError("forced failure")

        monkeypatch.setattr(cli.solver, "continue_in_g", boom)
        assert cli.main(["verify", "--oracle",
                         "--out", str(tmp_path / "v.log")]) == 2

    def test_seeded_reruns_are_byte_identical(self, tmp_path):
        out_a, out_b = tmp_path / "a.log", tmp_path / "b.log"
        cli.main(["verify", "--kz", "--seed", "7", "--out", str(out_a)])
        cli.main(["verify", "--kz", "--seed", "7", "--out", str(out_b)])
        assert out_a.read_bytes() == out_b.read_bytes()


class TestSweep:
    def test_energy_monotone_and_stats(self, tmp_path):
        cfg = write_config(tmp_path, dict(
            TWO_LEVEL, sweep={"start": 0.1, "stop": 1.0, "points": 10}))
        out = tmp_path / "sweep.csv"
        assert cli.main(["sweep", "--config", cfg, "--out", str(out)]) == 0
        rows = parse_csv(out)
        assert all(r["status"] == "ok" for r in rows)
        energies = [float(r["energy"]) for r in rows]
        assert all(b <= a + 1e-12 for a, b in zip(energies, energies[1:]))
        stats = json.loads((tmp_path / "sweep.json").read_text())
        assert stats["points"] == 10
        assert stats["succeeded"] == 10
        assert stats["warm"] is True

    def test_warm_start_saves_newton_iterations(self):
        m = cli._default_model(3)
        grid = list(np.linspace(0.2, 1.2, 12))
        _, warm = cli.run_sweep(m, grid, warm=True)
        _, cold = cli.run_sweep(m, grid, warm=False)
        assert warm["newton_iters_total"] < cold["newton_iters_total"]

    def test_bad_grids_exit_one(self, tmp_path):
        no_block = write_config(tmp_path, TWO_LEVEL)
        assert cli.main(["sweep", "--config", no_block]) == 1
        decreasing = write_config(
            tmp_path, dict(TWO_LEVEL, sweep={"grid": [1.0, 0.5]}))
        assert cli.main(["sweep", "--config", decreasing]) == 1
        negative = write_config(
            tmp_path, dict(TWO_LEVEL, sweep={"grid": [-0.5, 1.0]}))
        assert cli.main(["sweep", "--config", negative]) == 1


class TestContinuum:
    def test_two_size_run(self, tmp_path):
        cfg = write_config(tmp_path, {"coupling": 0.6, "filling": 0.5,
                                      "sizes": [8, 16]})
        out = tmp_path / "cont.csv"
        assert cli.main(["continuum", "--config", cfg, "--out", str(out)]) == 0
        rows = parse_csv(out)
        assert [int(r["n"]) for r in rows] == [8, 16]
        assert abs(float(rows[1]["deviation"])) < abs(float(rows[0]["deviation"]))
        summary = json.loads((tmp_path / "cont.json").read_text())
        assert abs(summary["gap"] - analysis.half_filling_gap(0.6)) <= 1e-12
        assert summary["passed"] is True

    def test_impossible_filling_exits_one(self, tmp_path):
        cfg = write_config(tmp_path, {"coupling": 0.6, "filling": 0.3,
                                      "sizes": [8, 16]})
        assert cli.main(["continuum", "--config", cfg]) == 1


class TestEntryPoint:
    def test_console_script_smoke(self, tmp_path):
        exe = shutil.which("rgpairing")
        assert exe is not None
        out = subprocess.run([exe, "verify", "--continuum"],
                             capture_output=True, text=True)
        assert out.returncode == 0
        assert "checks=1 failed=0" in out.stdout
