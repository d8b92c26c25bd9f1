"""FastAPI service exposing the compilation pipeline.

The service is stateless: every request carries a full model document (as
text, so syntax errors keep their line numbers) and gets back a report or
derived artifacts.  File handling stays on the client side.
"""

from __future__ import annotations

from fastapi import FastAPI

from .. import __version__
from ..codec import emit_dot, emit_fsm_json, parse_model
from ..derivation import derive_all, derive_role, drop_sends, ensure_derivable, flatten
from ..errors import (
    ChordcError,
    InvalidModelError,
    ModelSyntaxError,
    SchemaError,
    TooLargeError,
    UnstructuredError,
    UnsupportedConstructError,
)
from ..graph import recover_term, validate_graph
from ..model import ChoreographyTerm, MsgKind, Violation, iter_term, term_label, validate_term
from ..rolesets import loop_warnings, role_sets
from ..semantics import DEFAULT_CAP, check_machines, oracle_traces, render_trace, system_traces
from .schemas import (
    BlockedModel,
    CheckRequest,
    CheckResponse,
    DeadlockModel,
    DeriveRequest,
    DeriveResponse,
    DiagnosticModel,
    ErrorInfo,
    MachineArtifact,
    RoleSetRow,
    RolesetsRequest,
    RolesetsResponse,
    TraceRequest,
    TraceResponse,
    ValidateRequest,
    ValidateResponse,
    ViolationModel,
)

_INJECT_KINDS = {"drop-choicem": MsgKind.CHOICEM, "drop-flowm": MsgKind.FLOWM}


def _error_info(exc: ChordcError) -> ErrorInfo:
    info = ErrorInfo(message=str(exc))
    if isinstance(exc, SchemaError):
        info.path = exc.path
    if isinstance(exc, UnsupportedConstructError):
        info.path = exc.path
        info.construct = exc.construct
    return info


def _status_of(exc: ChordcError) -> str:
    if isinstance(exc, UnsupportedConstructError):
        return "unsupported"
    if isinstance(exc, TooLargeError):
        return "cap_exceeded"
    return "invalid"


def _violations(exc: ChordcError) -> list[ViolationModel]:
    if isinstance(exc, InvalidModelError):
        return [ViolationModel(path=v.path, message=v.message) for v in exc.violations]
    return []


def _prepare(document: str) -> ChoreographyTerm:
    """Parse the document and reduce a graph body to a term."""
    doc = parse_model(document)
    if doc.graph is not None:
        violations = validate_graph(doc.graph)
        if violations:
            raise InvalidModelError(violations)
        return recover_term(doc.graph)
    return doc.term


def _validated(document: str) -> ChoreographyTerm:
    term = _prepare(document)
    violations = validate_term(term)
    if violations:
        raise InvalidModelError(violations)
    return term


def create_app() -> FastAPI:
    app = FastAPI(
        title="chordc",
        version=__version__,
        description="Derives per-role state machines from choreography models "
        "and checks realizability of their composition.",
    )

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/validate", response_model=ValidateResponse)
    def validate(req: ValidateRequest) -> ValidateResponse:
        try:
            term = _prepare(req.document)
        except ChordcError as exc:
            return ValidateResponse(
                status=_status_of(exc), error=_error_info(exc), violations=_violations(exc)
            )
        violations = validate_term(term)
        return ValidateResponse(
            status="invalid" if violations else "ok",
            violations=[ViolationModel(path=v.path, message=v.message) for v in violations],
            warnings=loop_warnings(term),
        )

    @app.post("/rolesets", response_model=RolesetsResponse)
    def rolesets(req: RolesetsRequest) -> RolesetsResponse:
        try:
            term = _prepare(req.document)
        except ChordcError as exc:
            return RolesetsResponse(
                status=_status_of(exc), error=_error_info(exc), violations=_violations(exc)
            )
        sets = role_sets(term)
        labels = {path: term_label(node) for path, node in iter_term(term)}
        rows = [
            RoleSetRow(
                path=path,
                label=labels[path],
                sr=sorted(rs.sr),
                tr=sorted(rs.tr),
                pr=sorted(rs.pr),
            )
            for path, rs in sorted(sets.items())
        ]
        if req.node is not None:
            rows = [r for r in rows if r.path == req.node] or [
                r for r in rows if r.label == req.node
            ]
            if not rows:
                return RolesetsResponse(
                    status="invalid",
                    error=ErrorInfo(message=f"no node with path or label {req.node!r}"),
                )
        return RolesetsResponse(status="ok", rows=rows, warnings=loop_warnings(term))

    @app.post("/derive", response_model=DeriveResponse)
    def derive(req: DeriveRequest) -> DeriveResponse:
        try:
            doc = parse_model(req.document)
            term = _validated(req.document)
            ensure_derivable(term)
            sets = role_sets(term)
            roles = doc.roles if req.roles is None else req.roles
            for role in roles:
                if role not in doc.roles:
                    raise InvalidModelError([Violation("$.roles", f"undeclared role: {role!r}")])
            machines = derive_all(term, sets, roles)
            for flag in req.inject:
                machines = {
                    role: drop_sends(m, _INJECT_KINDS[flag]) for role, m in machines.items()
                }
            if req.flatten:
                machines = {role: flatten(m) for role, m in machines.items()}
        except ChordcError as exc:
            return DeriveResponse(
                status=_status_of(exc), error=_error_info(exc), violations=_violations(exc)
            )
        extension = "fsm.json" if req.format == "json" else "dot"
        emit = emit_fsm_json if req.format == "json" else emit_dot
        return DeriveResponse(
            status="ok",
            machines=[
                MachineArtifact(role=role, filename=f"{role}.{extension}", content=emit(m))
                for role, m in sorted(machines.items())
            ],
        )

    @app.post("/check", response_model=CheckResponse)
    def check(req: CheckRequest) -> CheckResponse:
        cap = req.cap if req.cap is not None else DEFAULT_CAP
        try:
            term = _validated(req.document)
            ensure_derivable(term)
            machines = derive_all(term, role_sets(term))
            for flag in req.inject:
                machines = {
                    role: drop_sends(m, _INJECT_KINDS[flag]) for role, m in machines.items()
                }
            report = check_machines(term, machines, req.loop_bound, cap)
        except ChordcError as exc:
            return CheckResponse(
                status=_status_of(exc), error=_error_info(exc), violations=_violations(exc)
            )
        return CheckResponse(
            status="ok" if report.ok else "check_failed",
            equivalent=report.equivalent,
            oracle_count=report.oracle_count,
            system_count=report.system_count,
            missing_traces=[render_trace(t) for t in report.missing_traces],
            extra_traces=[render_trace(t) for t in report.extra_traces],
            deadlocks=[
                DeadlockModel(
                    resolution=dict(d.resolution),
                    blocked=[
                        BlockedModel(role=b.role, state=b.state, action=b.action)
                        for b in d.blocked
                    ],
                )
                for d in report.deadlocks
            ],
            complementarity_ok=report.complementarity_ok,
            complementarity_problems=list(report.complementarity_problems),
            flowm_sends=report.flowm_sends,
            choicem_sends=report.choicem_sends,
            strict_barrier_diagnostics=[
                DiagnosticModel(path=path, witness=render_trace(witness))
                for path, witness in report.strict_barrier_diagnostics
            ],
        )

    @app.post("/trace", response_model=TraceResponse)
    def trace(req: TraceRequest) -> TraceResponse:
        cap = req.cap if req.cap is not None else DEFAULT_CAP
        try:
            term = _validated(req.document)
            if req.side == "oracle":
                traces = oracle_traces(term, req.loop_bound, cap)
            else:
                ensure_derivable(term)
                machines = derive_all(term, role_sets(term))
                traces = system_traces(machines, term, req.loop_bound, cap)
        except ChordcError as exc:
            return TraceResponse(
                status=_status_of(exc), error=_error_info(exc), violations=_violations(exc)
            )
        return TraceResponse(status="ok", traces=[render_trace(t) for t in sorted(traces)])

    return app


app = create_app()
