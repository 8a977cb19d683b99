"""HTTP service endpoints: health, rate certificates, iteration
artifacts, verification reports, and the error-code contract."""

import pytest
from fastapi.testclient import TestClient

from halpern import __version__
from halpern.config import default_catalog_config
from halpern.service import (
    IterateRequest,
    RatesRequest,
    ServiceError,
    VerifyRequest,
    create_app,
    handle_rates,
    handle_verify,
)

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


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app(), raise_server_exceptions=True)


class TestHealth:
    def test_reports_ok_and_package_version(self, client):
        resp = client.get("/health")
        assert resp.status_code == 200
        assert resp.json() == {"status": "ok", "version": __version__}


class TestRatesEndpoint:
    def test_closed_form_golden(self, client):
        resp = client.post("/rates", json={"which": "psi-closed", "eps": "1", "M": "1"})
        assert resp.status_code == 200
        body = resp.json()
        assert body["kind"] == "exact"
        assert body["value"] == "36"
        assert body["text"] == "Exact 36"

    def test_resolvent_meta_golden(self, client):
        resp = client.post(
            "/rates", json={"which": "K", "eps": "1/2", "M": "1", "g": "affine 1 1"}
        )
        assert resp.json()["text"] == "Exact 4"

    def test_psi_requires_then_uses_schedule(self, client):
        missing = client.post("/rates", json={"which": "psi", "eps": "1/2", "M": "2"})
        assert missing.status_code == 422
        assert missing.json()["detail"]["code"] == "config"
        ok = client.post(
            "/rates",
            json={
                "which": "psi",
                "eps": "1/2",
                "M": "2",
                "schedule": {"kind": "natural-shifted"},
            },
        )
        assert ok.status_code == 200
        assert ok.json()["kind"] == "exact"

    def test_sigma_with_identity_modulus_matches_pipeline_golden(self, client):
        resp = client.post(
            "/rates",
            json={
                "which": "sigma",
                "eps": "12",
                "M": "1",
                "schedule": {"kind": "natural-shifted"},
                "g": "const 0",
            },
        )
        assert resp.json()["text"] == "Exact 47"

    def test_sigma_with_empirical_modulus_needs_a_space(self, client):
        resp = client.post(
            "/rates",
            json={
                "which": "sigma",
                "eps": "12",
                "M": "1",
                "schedule": {"kind": "natural-shifted"},
                "g": "const 0",
                "omega": "empirical",
            },
        )
        assert resp.status_code == 400
        assert resp.json()["detail"]["code"] == "modulus-required"

    def test_budget_limited_result_reports_lower_bound(self, client):
        resp = client.post(
            "/rates",
            json={
                "which": "K",
                "eps": "1/2",
                "M": "1",
                "g": "affine 1 1",
                "budget": {"max_steps": 3, "max_bits": 64},
            },
        )
        body = resp.json()
        assert body["kind"] == "budget-exceeded"
        assert body["text"].startswith("BudgetExceeded lower=")

    def test_malformed_rational_rejected(self, client):
        resp = client.post("/rates", json={"which": "psi-closed", "eps": "x", "M": "1"})
        assert resp.status_code == 422
        assert resp.json()["detail"]["code"] == "config"

    def test_unknown_certificate_kind_rejected_by_validation(self, client):
        resp = client.post("/rates", json={"which": "zeta", "eps": "1", "M": "1"})
        assert resp.status_code == 422


class TestIterateEndpoint:
    def test_identity_trace_has_all_zero_residuals(self, client):
        resp = client.post("/iterate", json={"config": IDENT_CONFIG})
        assert resp.status_code == 200
        artifact = resp.json()["artifacts"][0]
        assert artifact["name"] == "ident"
        rows = artifact["trace_csv"].splitlines()
        assert rows[1].split(",")[-1] == "residual"
        assert all(float(line.split(",")[-1]) == 0.0 for line in rows[2:])
        assert artifact["path_csv"].splitlines()[1].split(",")[-1] == "residual"

    def test_identical_requests_give_identical_bodies(self, client):
        a = client.post("/iterate", json={"config": IDENT_CONFIG})
        b = client.post("/iterate", json={"config": IDENT_CONFIG})
        assert a.content == b.content

    def test_malformed_config_maps_to_422(self, client):
        resp = client.post("/iterate", json={"config": "[schedule]\nkind = warp\n"})
        assert resp.status_code == 422
        assert resp.json()["detail"]["code"] == "config"

    @pytest.mark.filterwarnings("ignore:overflow encountered")
    def test_numerical_blowup_maps_to_500(self, client):
        resp = client.post("/iterate", json={"config": OVERFLOW_CONFIG})
        assert resp.status_code == 500
        detail = resp.json()["detail"]
        assert detail["code"] == "numerical"
        assert "drift" in detail["error"]


class TestVerifyEndpoint:
    def test_catalog_config_verifies_clean(self, client):
        resp = client.post("/verify", json={"config": default_catalog_config()})
        assert resp.status_code == 200
        body = resp.json()
        assert body["ok"] is True
        assert len(body["report"]) == 52
        row = body["report"][0]
        assert set(row) == {
            "check",
            "instance",
            "parameters",
            "outcome",
            "witness",
            "bound",
            "elapsed_ms",
        }

    def test_undersized_M_fails_the_precondition_row(self, client):
        config = (
            "[schedule]\nkind = natural-shifted\n"
            "[instance]\noperator = catalog rotation-pi-3\nM = 1\n"
            "[run]\nN = 50\nm_max = 4\n"
        )
        resp = client.post("/verify", json={"config": config})
        assert resp.status_code == 200
        body = resp.json()
        assert body["ok"] is False
        failures = [r for r in body["report"] if r["outcome"] == "fail"]
        assert any(r["check"] == "m-bound-precondition" for r in failures)

    def test_empty_instance_list_is_ok_with_empty_report(self, client):
        resp = client.post("/verify", json={"config": "[schedule]\nkind = classic\n"})
        assert resp.json() == {"ok": True, "report": []}


class TestHandlersInProcess:
    def test_handle_rates_returns_the_response_model(self):
        resp = handle_rates(RatesRequest(which="psi-closed", eps="1/2", M="2"))
        assert resp.text == "Exact 576"

    def test_handle_rates_raises_service_error_with_exit_metadata(self):
        with pytest.raises(ServiceError) as info:
            handle_rates(RatesRequest(which="K", eps="1/2", M="1"))
        assert info.value.code == "config"
        assert info.value.status_code == 422

    def test_handle_verify_matches_http_route(self):
        direct = handle_verify(VerifyRequest(config=IDENT_CONFIG))
        via_http = TestClient(create_app()).post(
            "/verify", json={"config": IDENT_CONFIG}
        )
        body = via_http.json()
        assert direct.ok == body["ok"]
        assert [r.check for r in direct.report] == [r["check"] for r in body["report"]]
