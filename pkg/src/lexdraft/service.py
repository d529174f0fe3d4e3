"""HTTP API over the drafting pipeline.

The service holds no state of its own: every response is derived from
the pipeline's persisted event logs, so a restart loses nothing. Errors
become structured problem responses ({code, message, case_id}) with
machine-readable codes the workbench can act on.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .corpus import Attachment, CaseFile, Dictum, SectionKind
from .errors import (
    AlreadyApproved,
    BackendUnavailable,
    IterationLimit,
    LexdraftError,
    MalformedRecord,
    StaleVersion,
    UnknownCase,
    UnknownDomain,
)
from .pipeline import Registry

_STATUS_BY_CODE = {
    UnknownCase.__name__: 404,
    UnknownDomain.__name__: 404,
    AlreadyApproved.__name__: 409,
    StaleVersion.__name__: 409,
    IterationLimit.__name__: 409,
    MalformedRecord.__name__: 400,
    BackendUnavailable.__name__: 503,
}


class AttachmentIn(BaseModel):
    label: str
    text: str


class CaseIn(BaseModel):
    case_id: str
    objection: str
    report: str
    dictum: str
    attachments: list[AttachmentIn] = Field(default_factory=list)
    hearing_summary: str | None = None
    steering_advice: str | None = None


class FeedbackIn(BaseModel):
    instruction: str
    target_section: str | None = None


class RefineIn(BaseModel):
    feedback: list[FeedbackIn]
    actor: str = "user:web"


class ApproveIn(BaseModel):
    edited_sections: dict[str, str] | None = None
    actor: str = "user:web"


def _case_from_body(domain_id: str, body: CaseIn) -> CaseFile:
    try:
        dictum = Dictum(body.dictum)
    except ValueError as exc:
        raise MalformedRecord(f"dictum must be uphold or reject: {exc}") from exc
    return CaseFile(
        case_id=body.case_id,
        domain_id=domain_id,
        objection_letter=body.objection,
        enforcement_report=body.report,
        dictum=dictum,
        attachments=tuple(Attachment(a.label, a.text) for a in body.attachments),
        hearing_summary=body.hearing_summary,
        steering_advice=body.steering_advice,
    )


def _section_kind(value: str | None) -> SectionKind | None:
    if value is None:
        return None
    try:
        return SectionKind(value)
    except ValueError as exc:
        raise MalformedRecord(f"unknown section kind {value!r}") from exc


def _audit_view(record) -> dict:
    # Payload bodies (prompts, outputs) stay server-side; the API exposes
    # the event shape, digests and provenance only.
    return {
        "seq": record.seq,
        "event": record.event,
        "case_id": record.case_id,
        "ts": record.ts,
        "actor": record.actor,
        "digests": record.digests,
        "source_chunk_ids": list(record.source_chunk_ids),
        "params": record.params,
        "edit_stats": record.edit_stats,
        "prev_hash": record.prev_hash,
        "hash": record.hash,
    }


def create_app(root: str | Path, ui_dir: str | Path | None = None) -> FastAPI:
    registry = Registry(root)
    app = FastAPI(title="lexdraft", version="0.1.0")

    @app.exception_handler(LexdraftError)
    async def _lexdraft_error(request: Request, exc: LexdraftError):
        case_id = request.path_params.get("case_id")
        return JSONResponse(
            status_code=_STATUS_BY_CODE.get(exc.code, 422),
            content={"code": exc.code, "message": str(exc), "case_id": case_id},
        )

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "domains": registry.domain_ids()}

    @app.post("/domains/{domain_id}/cases", status_code=201)
    def create_case(domain_id: str, body: CaseIn):
        runtime = registry.runtime(domain_id)
        return runtime.create_case(_case_from_body(domain_id, body))

    @app.get("/cases/{case_id}")
    def get_case(case_id: str):
        return registry.runtime_for_case(case_id).case_view(case_id)

    @app.post("/cases/{case_id}/draft")
    def generate_draft(case_id: str):
        return registry.runtime_for_case(case_id).generate_draft(case_id)

    @app.get("/cases/{case_id}/drafts/{version}")
    def get_draft(case_id: str, version: int):
        return registry.runtime_for_case(case_id).draft_view(case_id, version)

    @app.post("/cases/{case_id}/drafts/{version}/refine")
    def refine(case_id: str, version: int, body: RefineIn):
        runtime = registry.runtime_for_case(case_id)
        feedback = [
            (_section_kind(fb.target_section), fb.instruction) for fb in body.feedback
        ]
        return runtime.refine_draft(
            case_id, feedback, target_version=version, actor=body.actor
        )

    @app.post("/cases/{case_id}/drafts/{version}/approve")
    def approve(case_id: str, version: int, body: ApproveIn | None = None):
        body = body or ApproveIn()
        runtime = registry.runtime_for_case(case_id)
        return runtime.approve_draft(
            case_id, version, edited_sections=body.edited_sections, actor=body.actor
        )

    @app.get("/cases/{case_id}/drafts/{version}/diff")
    def diff(case_id: str, version: int):
        return registry.runtime_for_case(case_id).diff_view(case_id, version)

    @app.get("/cases/{case_id}/audit")
    def audit(case_id: str):
        runtime = registry.runtime_for_case(case_id)
        return {
            "case_id": case_id,
            "records": [_audit_view(r) for r in runtime.read_audit(case_id)],
        }

    @app.get("/cases/{case_id}/export")
    def export(case_id: str):
        runtime = registry.runtime_for_case(case_id)
        return PlainTextResponse(
            runtime.export_letter(case_id), media_type="text/markdown"
        )

    if ui_dir is not None and Path(ui_dir).exists():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
