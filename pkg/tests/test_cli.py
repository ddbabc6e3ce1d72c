import csv
import json
import math
import time

import pytest

from nikishin.cli import EXIT_CHECK, EXIT_INPUT, EXIT_NUMERIC, EXIT_OK, main


def run(tmp_path, name, *argv):
    out = tmp_path / name
    status = main([*argv, "--out", str(out)])
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["exit_status"] == status
    return status, out, manifest


def digests(manifest):
    return {f["file"]: f["sha256"] for f in manifest["files"]}


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    base = tmp_path_factory.mktemp("pipeline")
    eq = run(base, "eq", "equilibrium", "solve", "builtin:pollaczek:mop", "--n-cells", "120")
    mop = run(base, "mop", "mop", "run", "pollaczek", "--n-list", "1,2,4,8", "--bits", "512", "--workers", "1")
    return base, eq, mop


class TestBranchPoints:
    def test_pollaczek(self, tmp_path):
        t0 = time.perf_counter()
        status, out, manifest = run(tmp_path, "bp", "curve", "branch-points", "pollaczek")
        assert time.perf_counter() - t0 < 1.0
        assert status == EXIT_OK
        obj = json.loads((out / "branch_points.json").read_text())
        e1 = math.sqrt((11 + 5 * math.sqrt(5)) / 8)
        e2 = math.sqrt((5 * math.sqrt(5) - 11) / 8)
        pts = [complex(*p) for p in obj["points"]]
        assert any(abs(p - e1) < 1e-10 for p in pts) and any(abs(p + e1) < 1e-10 for p in pts)
        assert any(abs(p - 1j * e2) < 1e-10 for p in pts) and any(abs(p + 1j * e2) < 1e-10 for p in pts)
        assert max(obj["residuals"]) <= 1e-10
        assert "branch_points.json" in digests(manifest)

    def test_unknown_kind_is_input_error(self, tmp_path):
        status, _, manifest = run(tmp_path, "bp", "curve", "branch-points", "nonsense")
        assert status == EXIT_INPUT
        assert manifest["error"].startswith("input error")


class TestCurveEval:
    def test_csv_columns(self, tmp_path):
        status, out, _ = run(tmp_path, "ce", "curve", "eval", "bessel", "--range", "1:12:5")
        assert status == EXIT_OK
        rows = list(csv.DictReader((out / "curve.csv").open()))
        assert len(rows) == 5
        assert {"x", "lambda1_density", "lambda2_density"} <= set(rows[0])
        # Bessel lambda1 density at x = 1 is 1/pi
        assert float(rows[0]["lambda1_density"]) == pytest.approx(1 / math.pi, rel=1e-8)

    def test_deterministic(self, tmp_path):
        _, _, m1 = run(tmp_path, "a", "curve", "eval", "pollaczek", "--range", "0.1:2:7", "--seed", "3")
        _, _, m2 = run(tmp_path, "b", "curve", "eval", "pollaczek", "--range", "0.1:2:7", "--seed", "3")
        assert digests(m1) == digests(m2)

    @pytest.mark.parametrize("tol", ["1", "1e-13"])
    def test_tol_bounds(self, tmp_path, tol):
        status, _, manifest = run(tmp_path, "ce", "curve", "eval", "bessel", "--tol", tol)
        assert status == EXIT_INPUT and "--tol" in manifest["error"]

    def test_bad_range(self, tmp_path):
        status, _, _ = run(tmp_path, "ce", "curve", "eval", "bessel", "--range", "3:1")
        assert status == EXIT_INPUT


class TestEquilibriumSolve:
    def test_builtin(self, pipeline):
        _, (status, out, manifest), _ = pipeline
        assert status == EXIT_OK
        assert manifest["checks"] == {"converged": True, "variational_conditions": True}
        for name in ("solution.json", "lambda1.json", "lambda2.json", "densities.csv", "variational.json"):
            assert name in digests(manifest)

    def test_missing_spec(self, tmp_path):
        status, _, manifest = run(tmp_path, "eq", "equilibrium", "solve", str(tmp_path / "nope.json"))
        assert status == EXIT_INPUT and manifest["files"] == []

    def test_malformed_spec(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"n_plus": -3}))
        status, _, _ = run(tmp_path, "eq", "equilibrium", "solve", str(spec))
        assert status == EXIT_INPUT


class TestMopRun:
    def test_first_polynomial(self, tmp_path):
        status, out, manifest = run(tmp_path, "mop", "mop", "run", "pollaczek", "--n-list", "1", "--bits", "256",
                                    "--workers", "1")
        assert status == EXIT_OK
        rec = json.loads((out / "mop_n001.json").read_text())
        assert [float(c) for c in rec["coefficients_Pn"]] == [6.0, -11.0, 1.0]
        assert float(rec["N1"]) == 27 / 32 and float(rec["N2"]) == 3 / 8
        assert {"mop_n001.json", "zeros.csv", "mop_run.json"} <= set(digests(manifest))

    def test_identical_seed_identical_digests(self, tmp_path, pipeline):
        _, _, (_, _, m1) = pipeline
        _, _, m2 = run(tmp_path, "again", "mop", "run", "pollaczek", "--n-list", "1,2,4,8", "--bits", "512",
                       "--workers", "1")
        assert digests(m1) == digests(m2)

    def test_precision_failure_exit_3(self, tmp_path):
        status, _, manifest = run(tmp_path, "mop", "mop", "run", "pollaczek", "--n-list", "8", "--bits", "64",
                                  "--workers", "1")
        assert status == EXIT_NUMERIC
        assert "PrecisionError" in manifest["error"]

    @pytest.mark.parametrize("n_list", ["0", "a,b", ""])
    def test_bad_n_list(self, tmp_path, n_list):
        status, _, _ = run(tmp_path, "mop", "mop", "run", "pollaczek", "--n-list", n_list)
        assert status == EXIT_INPUT

    def test_low_bits_rejected(self, tmp_path):
        status, _, _ = run(tmp_path, "mop", "mop", "run", "pollaczek", "--n-list", "1", "--bits", "32")
        assert status == EXIT_INPUT


def test_compare_zeros(tmp_path, pipeline):
    base, _, _ = pipeline
    status, out, manifest = run(tmp_path, "cmp", "compare", "zeros", str(base / "mop"), str(base / "eq"))
    assert status == EXIT_OK
    rows = json.loads((out / "compare.json").read_text())["rows"]
    assert [r["n"] for r in rows] == [1, 2, 4, 8]
    d1 = [r["d1"] for r in rows]
    assert all(b < a for a, b in zip(d1, d1[1:]))
    assert "compare.csv" in digests(manifest)


def test_report(tmp_path, pipeline):
    base, _, _ = pipeline
    status = main(["report", str(base / "eq"), "--out", str(tmp_path / "rep")])
    assert status == EXIT_OK
    text = (tmp_path / "rep" / "summary.md").read_text()
    assert "L1 gap to curve densities" in text
    assert (tmp_path / "rep" / "densities.svg").read_text().startswith("<svg")


def test_assumptions_check_reports_failing_invariant(tmp_path, capsys):
    status, out, manifest = run(tmp_path, "as", "assumptions", "check", "pollaczek", "--n-list", "10,50")
    assert status == EXIT_CHECK
    assert "ii@n=10" in manifest["error"] and "ii@n=10" in capsys.readouterr().err
    assert manifest["checks"]["i@n=50"] is True
    assert (out / "assumptions.json").exists()


def test_usage_error_exit_2(capsys):
    assert main(["curve"]) == 2
