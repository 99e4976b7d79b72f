import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from saddlecomp import cli, conic

REPO = Path(__file__).resolve().parent.parent
PROBLEMS = REPO / "demos" / "problems"
GOLDEN = Path(__file__).resolve().parent / "golden"


def run_cli(*args, cwd=None):
    proc = subprocess.run([sys.executable, "-m", "saddlecomp", *args],
                          capture_output=True, text=True, cwd=cwd)
    return proc.returncode, proc.stdout, proc.stderr


def write(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


class TestCheck:
    def test_matrix_game_compliant(self):
        code, out, _ = run_cli("check", str(PROBLEMS / "matrix_game.json"))
        assert code == 0
        assert "DSP-compliant" in out
        assert "convex: ['x']" in out and "concave: ['y']" in out

    def test_raw_product_noncompliant_exit_one(self):
        code, out, _ = run_cli("check", str(PROBLEMS / "raw_product.json"))
        assert code == 1
        assert "CurvatureViolation" in out

    def test_ambiguous_roles_exit_one(self):
        code, out, _ = run_cli("check", str(PROBLEMS / "ambiguous_roles.json"))
        assert code == 1
        assert "AmbiguousRole" in out
        assert "z" in out

    def test_parse_error_exit_two(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{ not json")
        code, _, err = run_cli("check", str(bad))
        assert code == 2
        assert "line" in err

    def test_unknown_name_reports_path(self, tmp_path):
        doc = {
            "variables": [{"name": "x", "shape": [2]}],
            "expressions": {"f": ["square", "nope"]},
            "objective": {"minimize": "f"},
        }
        code, _, err = run_cli("check", str(write(tmp_path, "p.json", doc)))
        assert code == 2
        assert "expressions.f" in err


class TestSolve:
    def test_matrix_game_value(self, tmp_path):
        code, out, _ = run_cli(
            "solve", str(PROBLEMS / "matrix_game.json"),
            "--log", str(tmp_path / "runs.jsonl"))
        assert code == 0
        assert "1.666666" in out

    def test_json_report_deterministic(self, tmp_path):
        args = ("solve", str(PROBLEMS / "matrix_game.json"), "--json",
                "--log", str(tmp_path / "runs.jsonl"))
        code1, out1, _ = run_cli(*args)
        code2, out2, _ = run_cli(*args)
        assert code1 == code2 == 0
        assert out1 == out2  # byte-identical report
        doc = json.loads(out1)
        assert abs(doc["value"] - 5 / 3) < 1e-4
        assert doc["gap"] <= 1e-6

    def test_robust_lp_demo_file(self, tmp_path):
        code, out, _ = run_cli("solve", str(PROBLEMS / "robust_lp.json"),
                               "--log", str(tmp_path / "runs.jsonl"))
        assert code == 0
        assert "2.999999" in out or "3.000000" in out or "value: 3" in out

    def test_infeasible_exit_four(self, tmp_path):
        doc = {
            "variables": [{"name": "x", "shape": [2]}, {"name": "y", "shape": [2]}],
            "expressions": {"f": ["inner", "x", "y"]},
            "objective": {"minimize_maximize": "f"},
            "constraints": [
                [">=", "x", 1], ["<=", "x", 0],
                [">=", "y", 0], ["<=", "y", 1],
            ],
        }
        code, out, _ = run_cli("solve", str(write(tmp_path, "inf.json", doc)),
                               "--log", str(tmp_path / "runs.jsonl"))
        assert code == 4

    def test_gap_exit_three(self, tmp_path):
        # scaled game: the backend's relative accuracy leaves an absolute
        # residual above the floor, so an extreme tolerance must trip
        doc = {
            "variables": [{"name": "x", "shape": [2]}, {"name": "y", "shape": [2]}],
            "expressions": {
                "f": ["inner", "x", ["matvec", [[1e6, 2e6], [3e6, 1e6]], "y"]],
            },
            "objective": {"minimize_maximize": "f"},
            "constraints": [
                [">=", "x", 0], ["==", ["sum", "x"], 1],
                [">=", "y", 0], ["==", ["sum", "y"], 1],
            ],
        }
        path = write(tmp_path, "big_game.json", doc)
        code, out, _ = run_cli("solve", str(path), "--tol", "1e-16",
                               "--log", str(tmp_path / "runs.jsonl"))
        assert code == 3
        assert "exceeds tolerance" in out
        code, _, _ = run_cli("solve", str(path),
                             "--log", str(tmp_path / "runs.jsonl"))
        assert code == 0  # default tolerance accepts the same solve

    def test_run_records_appended(self, tmp_path):
        log = tmp_path / "runs.jsonl"
        run_cli("solve", str(PROBLEMS / "matrix_game.json"), "--log", str(log))
        run_cli("solve", str(PROBLEMS / "matrix_game.json"), "--log", str(log))
        lines = log.read_text().strip().splitlines()
        assert len(lines) == 2
        rec = json.loads(lines[0])
        assert set(rec) == {"input_sha256", "timestamp", "status", "value",
                            "gap", "wall_time_s"}
        assert rec["status"] == "Solved"
        assert json.loads(lines[0])["input_sha256"] == \
            json.loads(lines[1])["input_sha256"]


class TestDualize:
    def test_golden_file_bit_exact(self, tmp_path):
        out_path = tmp_path / "mg.json"
        code, out, _ = run_cli("dualize", str(PROBLEMS / "matrix_game.json"),
                               "--out", str(out_path))
        assert code == 0
        assert out_path.read_bytes() == \
            (GOLDEN / "matrix_game_cone.json").read_bytes()
        assert "nonneg" in out and "zero" in out

    def test_structure_lambda_block_and_box_counts(self, tmp_path):
        prog = conic.ConeProgram.from_json(
            (GOLDEN / "matrix_game_cone.json").read_text())
        kinds = [c.kind for c in prog.cones]
        # one nonneg block for x >= 0, one for lambda, zero rows for the
        # equalities C'lambda = f and the template bookkeeping
        assert kinds.count("nonneg") == 2
        assert "__lam" in prog.var_index
        # box set demo: 2n nonneg rows for the lambda of an n-box
        n = 3
        doc = {
            "variables": [{"name": "x", "shape": [n]},
                          {"name": "y", "shape": [n], "attrs": ["local"]}],
            "expressions": {
                "se": ["saddle_max", ["inner", "x", "y"],
                       [[">=", "y", -1], ["<=", "y", 1]]],
            },
            "objective": {"minimize": "se"},
            "constraints": [["==", "x", [1, -2, 0.5]]],
        }
        path = write(tmp_path, "box.json", doc)
        out_path = tmp_path / "box_cone.json"
        code, _, _ = run_cli("dualize", str(path), "--out", str(out_path))
        assert code == 0
        prog = conic.ConeProgram.from_json(out_path.read_text())
        lam = prog.var_index["__lam"]
        assert lam[1] - lam[0] == 2 * n

    def test_round_trip_value(self, tmp_path):
        out_path = tmp_path / "mg.json"
        run_cli("dualize", str(PROBLEMS / "matrix_game.json"),
                "--out", str(out_path))
        prog = conic.ConeProgram.from_json(out_path.read_text())
        sol = conic.solve_cone(prog)
        assert sol.status == conic.OPTIMAL
        assert abs(sol.obj - 5.0 / 3.0) < 1e-8

    def test_missing_objective_is_parse_error(self, tmp_path):
        doc = {"variables": [{"name": "x"}], "expressions": {}}
        code, _, err = run_cli("dualize",
                               str(write(tmp_path, "empty.json", doc)),
                               "--out", str(tmp_path / "o.json"))
        assert code == 2


class TestDemo:
    @pytest.mark.parametrize("name", ["matrix_game", "robust_lp",
                                      "robust_production",
                                      "robust_weights_synthetic"])
    def test_demo_runs_with_passing_checks(self, name):
        code, out, _ = run_cli("demo", name)
        assert code == 0
        assert "PASS" in out and "FAIL" not in out

    def test_unknown_demo_exit_two(self):
        code, _, err = run_cli("demo", "nope")
        assert code == 2

    def test_markowitz_demo_or_capability_error(self):
        code, out, err = run_cli("demo", "robust_markowitz")
        if conic.PSD in conic.backend_capabilities():
            assert code == 0 and "PASS" in out
        else:
            assert code == 4 and "capability" in err.lower()


class TestInProcessMain:
    def test_usage_error_exit_two(self):
        assert cli.main([]) == 2
        assert cli.main(["solve"]) == 2

    def test_noncompliant_file_via_main(self):
        assert cli.main(["check", str(PROBLEMS / "raw_product.json")]) == 1
