"""Command-line front end: subcommand behaviour, exit codes, artifact
files, determinism, environment overrides, and the remote client mode."""

import json
import subprocess
import sys

import pytest

import halpern.cli as cli
from halpern.cli import _Client, main
from halpern.config import default_catalog_config
from halpern.iteration import read_trace_csv
from halpern.service import create_app
from halpern.verify import check_asymptotic_regularity, read_report

IDENT_CONFIG = """
[schedule]
kind = natural-shifted

[instance]
name = ident
operator = rotation 0
u = 1, 0
x0 = 0, 1
M = 2

[run]
N = 20
m_max = 3
"""

UNDERSIZED_CONFIG = """
[schedule]
kind = natural-shifted

[instance]
name = tight
operator = catalog rotation-pi-3
M = 1

[run]
N = 50
m_max = 4
"""

OVERFLOW_CONFIG = """
[space]
kind = hilbert
dim = 1

[schedule]
kind = natural-shifted

[instance]
name = drift
operator = affine 1 1 1e306
u = 0
x0 = 0
M = 4

[run]
N = 5000
m_max = 2
"""


@pytest.fixture(autouse=True)
def no_env_budget(monkeypatch):
    monkeypatch.delenv("HALPERN_BUDGET", raising=False)


def _write(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _residuals(csv_path):
    lines = csv_path.read_text().splitlines()
    assert lines[1].split(",")[-1] == "residual"
    return [float(line.split(",")[-1]) for line in lines[2:]]


class TestRatesCommand:
    def test_closed_form_golden_output(self, capsys):
        assert main(["rates", "--which", "psi-closed", "--M", "1", "--eps", "1"]) == 0
        assert capsys.readouterr().out == "Exact 36\n"

    def test_resolvent_meta_golden_output(self, capsys):
        code = main(
            ["rates", "--which", "K", "--M", "1", "--eps", "1/2", "--g", "affine 1 1"]
        )
        assert code == 0
        assert capsys.readouterr().out == "Exact 4\n"

    def test_budget_exceeded_output_format(self, capsys):
        code = main(
            [
                "rates", "--which", "K", "--M", "1", "--eps", "1/2",
                "--g", "affine 1 1", "--budget", "3",
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert out.startswith("BudgetExceeded lower=")
        assert " steps=" in out

    def test_env_budget_applies_and_flag_wins(self, capsys, monkeypatch):
        argv = ["rates", "--which", "K", "--M", "1", "--eps", "1/2", "--g", "affine 1 1"]
        monkeypatch.setenv("HALPERN_BUDGET", "3")
        assert main(argv) == 0
        assert capsys.readouterr().out.startswith("BudgetExceeded")
        assert main(argv + ["--budget", "100000"]) == 0
        assert capsys.readouterr().out == "Exact 4\n"

    def test_missing_schedule_is_a_flag_error(self, capsys):
        assert main(["rates", "--which", "psi", "--M", "2", "--eps", "1/2"]) == 2
        assert "schedule" in capsys.readouterr().err

    def test_schedule_parameters_require_schedule(self, capsys):
        code = main(
            ["rates", "--which", "psi-closed", "--M", "1", "--eps", "1", "--a", "2"]
        )
        assert code == 2

    def test_sigma_without_usable_modulus_exits_4(self, capsys):
        code = main(
            [
                "rates", "--which", "sigma", "--M", "1", "--eps", "12",
                "--schedule", "natural-shifted", "--g", "const 0",
                "--omega", "empirical",
            ]
        )
        assert code == 4
        assert "modulus" in capsys.readouterr().err

    def test_unknown_flag_value_rejected_by_parser(self):
        with pytest.raises(SystemExit) as info:
            main(["rates", "--which", "zeta", "--M", "1", "--eps", "1"])
        assert info.value.code == 2


class TestIterateCommand:
    def test_identity_trace_residuals_all_zero(self, tmp_path, capsys):
        cfg = _write(tmp_path, IDENT_CONFIG)
        assert main(["iterate", cfg, "--out", str(tmp_path / "out")]) == 0
        res = _residuals(tmp_path / "out" / "ident-trace.csv")
        assert len(res) == 21
        assert all(r == 0.0 for r in res)
        assert (tmp_path / "out" / "ident-path.csv").exists()

    def test_rotation_long_run_residuals_positive_and_decaying(self, tmp_path):
        cfg = _write(
            tmp_path,
            "[schedule]\nkind = natural-shifted\n"
            "[instance]\noperator = catalog rotation-pi-3\n"
            "[run]\nN = 10000\nm_max = 3\n",
        )
        assert main(["iterate", cfg, "--out", str(tmp_path / "out")]) == 0
        res = _residuals(tmp_path / "out" / "rotation-pi-3-trace.csv")
        tail = res[100:]
        assert all(r > 0.0 for r in tail)
        assert res[9999] < res[999] < res[99]
        assert res[9999] < 0.2

    def test_output_directory_from_config_when_no_flag(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        cfg = _write(tmp_path, IDENT_CONFIG.replace("m_max = 3", "m_max = 3\nout = fromcfg"))
        assert main(["iterate", cfg]) == 0
        assert (tmp_path / "fromcfg" / "ident-trace.csv").exists()

    def test_missing_schedule_exits_2_naming_the_section(self, tmp_path, capsys):
        cfg = _write(tmp_path, "[instance]\noperator = catalog rotation-pi-3\n")
        assert main(["iterate", cfg]) == 2
        assert "[schedule]" in capsys.readouterr().err

    def test_unreadable_config_exits_2(self, tmp_path, capsys):
        assert main(["iterate", str(tmp_path / "missing.cfg")]) == 2
        assert "cannot read" in capsys.readouterr().err

    @pytest.mark.filterwarnings("ignore:overflow encountered")
    def test_numerical_failure_exits_3(self, tmp_path, capsys):
        cfg = _write(tmp_path, OVERFLOW_CONFIG)
        assert main(["iterate", cfg, "--out", str(tmp_path / "out")]) == 3
        assert "non-finite" in capsys.readouterr().err

    def test_reruns_are_byte_identical(self, tmp_path):
        cfg = _write(tmp_path, IDENT_CONFIG)
        assert main(["iterate", cfg, "--out", str(tmp_path / "a")]) == 0
        assert main(["iterate", cfg, "--out", str(tmp_path / "b")]) == 0
        for name in ("ident-trace.csv", "ident-path.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_written_trace_round_trips_through_the_harness(self, tmp_path):
        cfg = _write(tmp_path, IDENT_CONFIG)
        assert main(["iterate", cfg, "--out", str(tmp_path / "out")]) == 0
        trace = read_trace_csv(tmp_path / "out" / "ident-trace.csv")
        assert check_asymptotic_regularity(trace, 1, 0) is True
        assert trace.residuals == read_trace_csv(
            tmp_path / "out" / "ident-trace.csv"
        ).residuals


class TestVerifyCommand:
    def test_default_catalog_config_passes(self, tmp_path, capsys):
        cfg = _write(tmp_path, default_catalog_config())
        assert main(["verify", cfg, "--out", str(tmp_path / "out")]) == 0
        entries = read_report(tmp_path / "out" / "report.json")
        assert len(entries) == 52
        assert all(entry.ok for entry in entries)
        assert "0 failed" in capsys.readouterr().out

    def test_undersized_M_exits_5_and_names_the_failed_invariant(self, tmp_path, capsys):
        cfg = _write(tmp_path, UNDERSIZED_CONFIG)
        assert main(["verify", cfg, "--out", str(tmp_path / "out")]) == 5
        err = capsys.readouterr().err
        assert "m-bound-precondition" in err
        entries = read_report(tmp_path / "out" / "report.json")
        failed = [e for e in entries if not e.ok]
        assert any(e.check == "m-bound-precondition" for e in failed)

    def test_empty_instance_list_exits_0_with_empty_report(self, tmp_path):
        cfg = _write(tmp_path, "[schedule]\nkind = classic\n")
        assert main(["verify", cfg, "--out", str(tmp_path / "out")]) == 0
        assert json.loads((tmp_path / "out" / "report.json").read_text()) == []

    def test_reports_identical_up_to_timing(self, tmp_path):
        cfg = _write(tmp_path, IDENT_CONFIG)
        assert main(["verify", cfg, "--out", str(tmp_path / "a")]) == 0
        assert main(["verify", cfg, "--out", str(tmp_path / "b")]) == 0

        def canonical(path):
            rows = json.loads(path.read_text())
            for row in rows:
                row.pop("elapsed_ms")
            return rows

        assert canonical(tmp_path / "a" / "report.json") == canonical(
            tmp_path / "b" / "report.json"
        )

    def test_custom_report_name(self, tmp_path):
        cfg = _write(tmp_path, "[schedule]\nkind = classic\n")
        assert main(["verify", cfg, "--out", str(tmp_path), "--report", "r.json"]) == 0
        assert (tmp_path / "r.json").exists()


@pytest.fixture()
def fake_remote(monkeypatch):
    """Route the CLI's HTTP calls into an in-memory app instance."""
    import httpx
    from fastapi.testclient import TestClient

    test_client = TestClient(create_app())
    calls = []

    def fake_post(url, json=None, timeout=None):
        calls.append(url)
        route = url.split("http://fake", 1)[1]
        return test_client.post(route, json=json)

    monkeypatch.setattr(httpx, "post", fake_post)
    return calls


class TestServerMode:
    def test_rates_through_the_wire_matches_local(self, capsys, fake_remote):
        argv = ["rates", "--which", "psi-closed", "--M", "1", "--eps", "1"]
        assert main(argv) == 0
        local = capsys.readouterr().out
        assert main(argv + ["--server", "http://fake"]) == 0
        assert capsys.readouterr().out == local
        assert fake_remote == ["http://fake/rates"]

    def test_error_codes_survive_the_wire(self, capsys, fake_remote):
        code = main(
            [
                "rates", "--which", "sigma", "--M", "1", "--eps", "12",
                "--schedule", "natural-shifted", "--g", "const 0",
                "--omega", "empirical", "--server", "http://fake",
            ]
        )
        assert code == 4

    def test_iterate_artifacts_identical_local_and_remote(self, tmp_path, fake_remote):
        cfg = _write(tmp_path, IDENT_CONFIG)
        assert main(["iterate", cfg, "--out", str(tmp_path / "local")]) == 0
        code = main(
            ["iterate", cfg, "--out", str(tmp_path / "remote"), "--server", "http://fake"]
        )
        assert code == 0
        assert (tmp_path / "local" / "ident-trace.csv").read_bytes() == (
            tmp_path / "remote" / "ident-trace.csv"
        ).read_bytes()

    def test_validation_list_details_map_to_config_errors(self, fake_remote):
        from halpern.service import ServiceError
        from halpern.service.schemas import RatesRequest

        client = _Client("http://fake/")
        with pytest.raises(ServiceError) as info:
            # valid model client-side, rejected by server-side validation
            client._post("/rates", RatesRequest.model_construct(which="zeta", eps="1", M="1"))
        assert info.value.code == "config"

    def test_unreachable_server_is_a_generic_failure(self, capsys, monkeypatch):
        import httpx

        def refuse(url, json=None, timeout=None):
            raise httpx.ConnectError("connection refused")

        monkeypatch.setattr(httpx, "post", refuse)
        code = main(
            ["rates", "--which", "psi-closed", "--M", "1", "--eps", "1",
             "--server", "http://fake"]
        )
        assert code == 1
        assert "refused" in capsys.readouterr().err


class TestServeCommand:
    def test_serve_invokes_uvicorn_with_host_and_port(self, monkeypatch):
        import uvicorn

        seen = {}

        def fake_run(app, host=None, port=None):
            seen["host"], seen["port"] = host, port

        monkeypatch.setattr(uvicorn, "run", fake_run)
        assert main(["serve", "--host", "0.0.0.0", "--port", "9001"]) == 0
        assert seen == {"host": "0.0.0.0", "port": 9001}


class TestEntryPoint:
    def test_module_invocation_shows_usage(self):
        proc = subprocess.run(
            [sys.executable, "-m", "halpern.cli", "--help"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        for sub in ("iterate", "rates", "verify", "serve"):
            assert sub in proc.stdout
