"""FastAPI application and the handler functions behind it.

The handlers are plain functions over the pydantic models so the
command-line front end can call them in-process (no socket) and remote
clients go through HTTP with identical semantics.  Failures raise
`ServiceError` with a stable machine-readable code:

* ``config``            — malformed configuration or flags (HTTP 422)
* ``modulus-required``  — a sigma certificate needs a continuity
                          modulus that is not available (HTTP 400)
* ``numerical``         — iteration diverged or a solver cap was hit
                          (HTTP 500)
"""

from __future__ import annotations

from fractions import Fraction
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from halpern import __version__
from halpern.config import ConfigError, parse_config, schedule_from_spec
from halpern.counterfunction import parse_counterfunction
from halpern.geometry import Modulus
from halpern.iteration import halpern_orbit, path_csv_text, resolvent_path, trace_csv_text
from halpern.rates import (
    DEFAULT_BUDGET,
    BudgetExceeded,
    EvalBudget,
    Exact,
    ModuliBundle,
    RateResult,
    k_resolvent_meta,
    phi_rate,
    psi_closed_form,
    psi_rate,
    sigma_rate,
)
from halpern.service.schemas import (
    BudgetSpec,
    HealthResponse,
    IterateRequest,
    IterateResponse,
    RateResponse,
    RatesRequest,
    ReportRow,
    TraceArtifact,
    VerifyRequest,
    VerifyResponse,
)
from halpern.verify import run_suite

_STATUS = {"config": 422, "modulus-required": 400, "numerical": 500}


class ServiceError(Exception):
    """Handler failure with a stable code (see module docstring)."""

    def __init__(self, code: str, message: str):
        assert code in _STATUS, code
        super().__init__(message)
        self.code = code
        self.message = message

    @property
    def status_code(self) -> int:
        return _STATUS[self.code]


def _rational(text: str, what: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise ServiceError("config", f"{what}: expected a rational like p/q, got {text!r}")


def _budget(spec: Optional[BudgetSpec]) -> EvalBudget:
    if spec is None:
        return DEFAULT_BUDGET
    return EvalBudget(max_steps=spec.max_steps, max_bits=spec.max_bits)


def _rate_response(result: RateResult) -> RateResponse:
    if isinstance(result, Exact):
        return RateResponse(
            kind="exact", value=str(result.value), text=f"Exact {result.value}"
        )
    assert isinstance(result, BudgetExceeded)
    return RateResponse(
        kind="budget-exceeded",
        lower_bound=str(result.lower_bound),
        steps_done=result.steps_done,
        text=f"BudgetExceeded lower={result.lower_bound} steps={result.steps_done}",
    )


def handle_rates(req: RatesRequest) -> RateResponse:
    eps = _rational(req.eps, "eps")
    M = _rational(req.M, "M")
    budget = _budget(req.budget)

    def need_schedule():
        if req.schedule is None:
            raise ServiceError("config", f"--which {req.which} requires a schedule")
        try:
            return schedule_from_spec(req.schedule.kind, req.schedule.a, req.schedule.gamma)
        except ConfigError as exc:
            raise ServiceError("config", str(exc))

    def need_g():
        if req.g is None:
            raise ServiceError("config", f"--which {req.which} requires a counterfunction")
        try:
            return parse_counterfunction(req.g)
        except ValueError as exc:
            raise ServiceError("config", f"g: {exc}")

    try:
        if req.which == "psi-closed":
            return _rate_response(Exact(psi_closed_form(eps, M)))
        if req.which == "psi":
            bundle = ModuliBundle.from_schedule(need_schedule(), M)
            return _rate_response(Exact(psi_rate(eps, bundle)))
        if req.which == "phi":
            s = need_schedule()
            value = phi_rate(
                eps,
                M,
                S1=s.R2,
                S2=lambda t: s.R3(t / M),
                S3=lambda _t: 0,
                D=lambda e: s.E(s.R3(e / (3 * M))),
            )
            return _rate_response(Exact(value))
        if req.which == "K":
            return _rate_response(k_resolvent_meta(eps, need_g(), M, budget))
        # sigma
        omega = Modulus.identity() if req.omega == "identity" else Modulus.empirical(200)
        bundle = ModuliBundle.from_schedule(need_schedule(), M, omega=omega)
        return _rate_response(sigma_rate(eps, need_g(), bundle, budget=budget))
    except ServiceError:
        raise
    except ValueError as exc:
        if "modulus required" in str(exc):
            raise ServiceError("modulus-required", str(exc))
        raise ServiceError("config", str(exc))


def _parsed(config_text: str):
    try:
        return parse_config(config_text)
    except ConfigError as exc:
        raise ServiceError("config", str(exc))


def handle_iterate(req: IterateRequest) -> IterateResponse:
    cfg = _parsed(req.config)
    artifacts = []
    for inst in cfg.instances:
        try:
            trace = halpern_orbit(inst.op, cfg.schedule, inst.u, inst.x0, cfg.N, inst.space)
            path = resolvent_path(inst.op, inst.u, cfg.m_max, space=inst.space)
        except (ArithmeticError, RuntimeError) as exc:
            raise ServiceError("numerical", f"{inst.name}: {exc}")
        artifacts.append(
            TraceArtifact(
                name=inst.name,
                trace_csv=trace_csv_text(trace),
                path_csv=path_csv_text(path),
            )
        )
    return IterateResponse(artifacts=artifacts)


def handle_verify(req: VerifyRequest) -> VerifyResponse:
    cfg = _parsed(req.config)
    try:
        entries = run_suite(
            cfg.instances,
            schedule=cfg.schedule,
            eps_grid=cfg.eps,
            gs=cfg.gs,
            m_max=cfg.m_max,
            budget=cfg.budget,
        )
    except (ArithmeticError, RuntimeError) as exc:
        raise ServiceError("numerical", str(exc))
    rows = [ReportRow(**entry.as_dict()) for entry in entries]
    return VerifyResponse(ok=all(entry.ok for entry in entries), report=rows)


def create_app() -> FastAPI:
    app = FastAPI(title="halpern", version=__version__)

    @app.exception_handler(ServiceError)
    async def _service_error(_request: Request, exc: ServiceError):
        return JSONResponse(
            status_code=exc.status_code,
            content={"detail": {"code": exc.code, "error": exc.message}},
        )

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/rates", response_model=RateResponse)
    def rates(req: RatesRequest) -> RateResponse:
        return handle_rates(req)

    @app.post("/iterate", response_model=IterateResponse)
    def iterate(req: IterateRequest) -> IterateResponse:
        return handle_iterate(req)

    @app.post("/verify", response_model=VerifyResponse)
    def verify(req: VerifyRequest) -> VerifyResponse:
        return handle_verify(req)

    return app


app = create_app()
