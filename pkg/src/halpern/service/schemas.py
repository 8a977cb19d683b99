"""Request/response models for the HTTP facade.

Rationals travel as strings (`"1/2"`, `"36"`): certificate values are
unbounded naturals that would overflow JSON numbers, and exactness
matters everywhere else.  `RateResponse.text` carries the canonical
display form (`Exact <n>` / `BudgetExceeded lower=<n> steps=<n>`) so
thin clients can print it verbatim.
"""

from __future__ import annotations

from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, Field


class ScheduleSpec(BaseModel):
    kind: Literal["natural-shifted", "classic", "power-law"]
    a: Optional[str] = None
    gamma: Optional[str] = None


class BudgetSpec(BaseModel):
    max_steps: int = Field(gt=0)
    max_bits: int = Field(gt=0)


class RatesRequest(BaseModel):
    which: Literal["psi", "psi-closed", "phi", "K", "sigma"]
    eps: str
    M: str
    schedule: Optional[ScheduleSpec] = None
    g: Optional[str] = None
    budget: Optional[BudgetSpec] = None
    omega: Literal["identity", "empirical"] = "identity"


class RateResponse(BaseModel):
    kind: Literal["exact", "budget-exceeded"]
    value: Optional[str] = None
    lower_bound: Optional[str] = None
    steps_done: Optional[int] = None
    text: str


class IterateRequest(BaseModel):
    config: str


class TraceArtifact(BaseModel):
    name: str
    trace_csv: str
    path_csv: str


class IterateResponse(BaseModel):
    artifacts: List[TraceArtifact]


class VerifyRequest(BaseModel):
    config: str


class ReportRow(BaseModel):
    check: str
    instance: str
    parameters: Dict[str, object]
    outcome: str
    witness: Optional[int] = None
    bound: Optional[str] = None
    elapsed_ms: float


class VerifyResponse(BaseModel):
    ok: bool
    report: List[ReportRow]


class HealthResponse(BaseModel):
    status: Literal["ok"]
    version: str
