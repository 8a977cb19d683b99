"""HTTP facade: pydantic request/response models and the FastAPI app."""

from halpern.service.app import ServiceError, create_app, handle_iterate, handle_rates, handle_verify
from halpern.service.schemas import (
    BudgetSpec,
    HealthResponse,
    IterateRequest,
    IterateResponse,
    RateResponse,
    RatesRequest,
    ReportRow,
    ScheduleSpec,
    TraceArtifact,
    VerifyRequest,
    VerifyResponse,
)

__all__ = [
    "BudgetSpec",
    "HealthResponse",
    "IterateRequest",
    "IterateResponse",
    "RateResponse",
    "RatesRequest",
    "ReportRow",
    "ScheduleSpec",
    "ServiceError",
    "TraceArtifact",
    "VerifyRequest",
    "VerifyResponse",
    "create_app",
    "handle_iterate",
    "handle_rates",
    "handle_verify",
]
