import csv
import io
import json
import subprocess
import sys

import pytest

from bivarseq import (
    LatticeCounts,
    asn_exact,
    confidence_region,
    make_params,
    post_test_estimate,
    power_exact,
    stopping_pmf_exact,
)
from bivarseq.cli_monitor import main
from conftest import make_design


def run_cli(*argv):
    out = io.StringIO()
    code = main(list(argv), out=out)
    return code, out.getvalue()


@pytest.fixture(scope="module")
def design_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "design.json"
    code, payload = run_cli("design", "--alpha", "0.05", "--beta", "0.1",
                            "--theta-x0", "0.05", "--theta-x1", "0.1",
                            "--theta-y0", "0.1", "--theta-y1", "0.2")
    assert code == 0
    path.write_text(payload)
    return str(path)


class TestDesignCommand:
    def test_pooled_geometry(self, design_file):
        doc = json.loads(open(design_file).read())
        assert doc["n_star"] == 121
        assert doc["y"]["k_star"] == 18
        assert abs(doc["x"]["k_star"] - 19) <= 1
        assert doc["x"]["alpha_tilde"] == pytest.approx(0.025)

    def test_floor_rounding_flag(self):
        code, payload = run_cli("design", "--alpha", "0.05", "--beta", "0.1",
                                "--theta-x0", "0.05", "--theta-x1", "0.1",
                                "--theta-y0", "0.1", "--theta-y1", "0.2",
                                "--rounding", "floor")
        assert code == 0
        assert json.loads(payload)["x"]["k_star"] == 19

    def test_exact_refine_flag(self):
        code, payload = run_cli("design", "--alpha", "0.05", "--beta", "0.2",
                                "--theta-x0", "0.1", "--theta-x1", "0.25",
                                "--theta-y0", "0.1", "--theta-y1", "0.25",
                                "--exact-refine")
        assert code == 0
        doc = json.loads(payload)
        from bivarseq.design import binom_cdf, binom_sf

        x = doc["x"]
        assert binom_sf(x["k_star"], x["n_star"], 0.1) <= 0.025
        assert binom_cdf(x["k_star"], x["n_star"], 0.25) <= 0.2


class TestEvaluationCommands:
    def test_power_exact(self, design_file):
        code, payload = run_cli("power", "--design", design_file,
                                "--theta-x", "0.1", "--theta-y", "0.2",
                                "--rho", "0.1", "--method", "exact")
        assert code == 0
        doc = json.loads(payload)
        from bivarseq import BivariateDesign

        design = BivariateDesign.from_dict(json.load(open(design_file)))
        assert doc["power"] == pytest.approx(
            power_exact(design, make_params(0.1, 0.2, 0.1)), abs=1e-12)

    def test_asn_with_bounds(self, design_file):
        code, payload = run_cli("asn", "--design", design_file,
                                "--theta-x", "0.25", "--theta-y", "0.25",
                                "--rho", "0.1", "--method", "exact")
        assert code == 0
        doc = json.loads(payload)
        assert doc["lower"] <= doc["asn"] <= doc["upper"]

    def test_params_file_alternative(self, design_file, tmp_path):
        pfile = tmp_path / "params.json"
        pfile.write_text(json.dumps({"theta_x": 0.1, "theta_y": 0.2, "rho": 0.1}))
        code_a, by_file = run_cli("power", "--design", design_file,
                                  "--params", str(pfile), "--method", "exact")
        code_b, by_flags = run_cli("power", "--design", design_file,
                                   "--theta-x", "0.1", "--theta-y", "0.2",
                                   "--rho", "0.1", "--method", "exact")
        assert code_a == code_b == 0
        assert json.loads(by_file) == json.loads(by_flags)

    def test_missing_margins_is_domain_error(self, design_file):
        code, _ = run_cli("power", "--design", design_file)
        assert code == 2

    def test_pmf_csv_layout(self, design_file):
        code, payload = run_cli("--output", "csv", "pmf", "--design", design_file,
                                "--theta-x", "0.1", "--theta-y", "0.2",
                                "--rho", "0.1", "--method", "exact")
        assert code == 0
        rows = list(csv.reader(io.StringIO(payload)))
        assert rows[0] == ["m", "p_hit_x", "p_hit_y", "p_corner"]
        from bivarseq import BivariateDesign

        design = BivariateDesign.from_dict(json.load(open(design_file)))
        pmf = stopping_pmf_exact(design, make_params(0.1, 0.2, 0.1))
        assert len(rows) - 1 == len(pmf.support)
        assert float(rows[1][1]) == pytest.approx(pmf.mass_x[0], abs=1e-15)

    def test_export_grid(self, design_file):
        code, payload = run_cli("--output", "csv", "export-grid",
                                "--design", design_file, "--rho", "0.1",
                                "--theta-x-min", "0.02", "--theta-x-max", "0.3",
                                "--theta-y-min", "0.02", "--theta-y-max", "0.3",
                                "--steps", "4", "--method", "exact")
        assert code == 0
        rows = list(csv.reader(io.StringIO(payload)))
        assert rows[0] == ["theta_x", "theta_y", "power"]
        assert len(rows) > 4
        powers = [float(r[2]) for r in rows[1:]]
        assert all(0.0 <= p <= 1.0 for p in powers)

    def test_simulate(self, design_file, tmp_path):
        streams = tmp_path / "streams"
        code, payload = run_cli("simulate", "--design", design_file,
                                "--theta-x", "0.1", "--theta-y", "0.2",
                                "--rho", "0.1", "--reps", "300", "--seed", "5",
                                "--emit-streams", str(streams),
                                "--max-stream-files", "3")
        assert code == 0
        doc = json.loads(payload)
        assert 0.8 < doc["power"] <= 1.0
        files = sorted(streams.iterdir())
        assert len(files) == 3
        first = [json.loads(line) for line in files[0].read_text().splitlines()]
        assert first[0].keys() == {"seq", "x", "y"}

    def test_analyze_matches_library(self):
        code, payload = run_cli("analyze", "--counts", "63", "18", "11", "25",
                                "--m-star", "117")
        assert code == 0
        doc = json.loads(payload)
        est = post_test_estimate(LatticeCounts(63, 18, 11, 25), 117)
        region = confidence_region(est, 0.95)
        assert doc["estimate"]["rho_hat"] == pytest.approx(est.rho_hat, abs=1e-12)
        assert doc["region"]["half_lengths"][0] == pytest.approx(
            region.half_lengths[0], abs=1e-12)
        assert doc["relative_risk"]["ci"][0] == pytest.approx(0.8740, abs=5e-4)

    def test_analyze_ellipse_points(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        code, payload = run_cli("analyze", "--counts", "63", "18", "11", "25",
                                "--emit-ellipse-points", "100",
                                "--ellipse-file", "pts.csv")
        assert code == 0
        rows = list(csv.reader(open(tmp_path / "pts.csv")))
        assert rows[0] == ["theta_x", "theta_y"]
        assert len(rows) == 101


class TestMonitorCommand:
    def test_monitor_resumes_across_invocations(self, design_file, tmp_path):
        state = tmp_path / "state.json"
        events_a = tmp_path / "a.jsonl"
        events_b = tmp_path / "b.jsonl"
        events_a.write_text("".join(
            json.dumps({"seq": i + 1, "x": 1, "y": 1}) + "\n" for i in range(10)))
        events_b.write_text("".join(
            json.dumps({"seq": i + 11, "x": 1, "y": 1}) + "\n" for i in range(20)))
        code, out_a = run_cli("monitor", "--design", design_file,
                              "--state", str(state), "--input", str(events_a))
        assert code == 0
        records = [json.loads(line) for line in out_a.splitlines()]
        assert records[-1]["decision"] == "continue"
        assert records[-1]["s_y"] == 10
        code, out_b = run_cli("monitor", "--design", design_file,
                              "--state", str(state), "--input", str(events_b))
        assert code == 0
        records = [json.loads(line) for line in out_b.splitlines()]
        assert records[-1]["decision"] == "reject"
        assert records[-1]["status"] == "rejected_y"
        assert records[-1]["m_star"] == 19
        saved = json.loads(state.read_text())
        assert saved["status"] == "rejected_y"

    def test_monitor_rejects_wrong_design(self, design_file, tmp_path):
        state = tmp_path / "state.json"
        events = tmp_path / "ev.jsonl"
        events.write_text(json.dumps({"seq": 1, "x": 0, "y": 0}) + "\n")
        assert run_cli("monitor", "--design", design_file, "--state", str(state),
                       "--input", str(events))[0] == 0
        other = tmp_path / "other.json"
        other.write_text(json.dumps(make_design(50, 5, 5).to_dict()))
        code, _ = run_cli("monitor", "--design", str(other),
                          "--state", str(state), "--input", str(events))
        assert code == 2


class TestExitCodes:
    def test_infeasible_parameters(self, design_file):
        code, _ = run_cli("power", "--design", design_file,
                          "--theta-x", "0.05", "--theta-y", "0.1",
                          "--rho", "-0.1", "--method", "exact")
        assert code == 2

    def test_missing_design_file(self):
        code, _ = run_cli("power", "--design", "/nonexistent/d.json",
                          "--theta-x", "0.1", "--theta-y", "0.2")
        assert code == 3

    def test_quiet_suppresses_error_message(self, design_file, capsys):
        code, _ = run_cli("--quiet", "power", "--design", design_file,
                          "--theta-x", "0.05", "--theta-y", "0.1",
                          "--rho", "-0.1")
        assert code == 2
        assert capsys.readouterr().err == ""

    def test_console_entry_point(self):
        proc = subprocess.run(
            [sys.executable, "-m", "bivarseq.cli_monitor", "design",
             "--alpha", "0.05", "--beta", "0.1",
             "--theta-x0", "0.05", "--theta-x1", "0.1",
             "--theta-y0", "0.1", "--theta-y1", "0.2"],
            capture_output=True, text=True)
        assert proc.returncode == 0
        assert json.loads(proc.stdout)["n_star"] == 121
