"""Pydantic request/response models for the HTTP API.

Domain outcomes (invalid model, failed check, refused construct, exceeded
cap) are data, not transport errors: every endpoint answers 200 with a
``status`` field the client maps to an exit code.
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field

Status = Literal["ok", "invalid", "check_failed", "unsupported", "cap_exceeded"]


class ErrorInfo(BaseModel):
    message: str
    path: str | None = None
    construct: str | None = None


class ViolationModel(BaseModel):
    path: str
    message: str


class ValidateRequest(BaseModel):
    document: str


class ValidateResponse(BaseModel):
    status: Status
    violations: list[ViolationModel] = Field(default_factory=list)
    warnings: list[str] = Field(default_factory=list)
    error: ErrorInfo | None = None


class RolesetsRequest(BaseModel):
    document: str
    node: str | None = None  # node path or label; all nodes when omitted


class RoleSetRow(BaseModel):
    path: str
    label: str
    sr: list[str]
    tr: list[str]
    pr: list[str]


class RolesetsResponse(BaseModel):
    status: Status
    rows: list[RoleSetRow] = Field(default_factory=list)
    warnings: list[str] = Field(default_factory=list)
    violations: list[ViolationModel] = Field(default_factory=list)
    error: ErrorInfo | None = None


class DeriveRequest(BaseModel):
    document: str
    roles: list[str] | None = None  # None derives every declared role
    flatten: bool = False
    format: Literal["json", "dot"] = "json"
    inject: list[Literal["drop-choicem", "drop-flowm"]] = Field(default_factory=list)


class MachineArtifact(BaseModel):
    role: str
    filename: str
    content: str


class DeriveResponse(BaseModel):
    status: Status
    machines: list[MachineArtifact] = Field(default_factory=list)
    violations: list[ViolationModel] = Field(default_factory=list)
    error: ErrorInfo | None = None


class CheckRequest(BaseModel):
    document: str
    loop_bound: int = 0
    cap: int | None = None
    inject: list[Literal["drop-choicem", "drop-flowm"]] = Field(default_factory=list)


class BlockedModel(BaseModel):
    role: str
    state: str
    action: str


class DeadlockModel(BaseModel):
    resolution: dict[str, int]  # choice node path -> taken branch (0 left, 1 right)
    blocked: list[BlockedModel]


class DiagnosticModel(BaseModel):
    path: str
    witness: str


class CheckResponse(BaseModel):
    status: Status
    equivalent: bool | None = None
    oracle_count: int | None = None
    system_count: int | None = None
    missing_traces: list[str] = Field(default_factory=list)
    extra_traces: list[str] = Field(default_factory=list)
    deadlocks: list[DeadlockModel] = Field(default_factory=list)
    complementarity_ok: bool | None = None
    complementarity_problems: list[str] = Field(default_factory=list)
    flowm_sends: int | None = None
    choicem_sends: int | None = None
    strict_barrier_diagnostics: list[DiagnosticModel] = Field(default_factory=list)
    violations: list[ViolationModel] = Field(default_factory=list)
    error: ErrorInfo | None = None


class TraceRequest(BaseModel):
    document: str
    side: Literal["oracle", "system"]
    loop_bound: int = 1
    cap: int | None = None


class TraceResponse(BaseModel):
    status: Status
    traces: list[str] = Field(default_factory=list)
    violations: list[ViolationModel] = Field(default_factory=list)
    error: ErrorInfo | None = None
