"""The drafting workflow: generate, refine, approve, with a full audit trail.

State is event-sourced: every case has an append-only JSON Lines file of
audit records, hash-chained per case, from which drafts and status are
materialized. Nothing about a case lives anywhere else, so a restart
loses nothing and the trail is the single source of truth. Status moves
Generated -> Refined* -> Approved and never leaves Approved.

When de-identification is enabled for a domain, every text that leaves
the trust boundary (prompts, retrieval queries, retrieved chunk texts)
is redacted against one per-case map, and a guard scan runs before any
transmission; the map itself stays server-side and never enters the
audit trail.
"""

from __future__ import annotations

import datetime as dt
import json
import re
import threading
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path

from .corpus import Attachment, CaseFile, Chunk, SectionKind, load_chunk_store
from .deid import DeidSession, PiiRuleSet, default_rules, reidentify, scan_for_pii
from .embedding import embed_text, make_embedder
from .errors import (
    AlreadyApproved,
    AuditChainBroken,
    ConfigurationError,
    EmptyFeedback,
    IterationLimit,
    MalformedRecord,
    PiiLeak,
    RetrievalEmpty,
    SectionParseFailure,
    StaleVersion,
    UnknownCase,
    UnknownDomain,
)
from .index import VectorIndex, build_index, load_index, paired_explanations, save_index, top_k
from .letters import parse_letter, render_letter, sections_from_lists, sections_to_lists
from .llm import CompletionRequest, complete, make_llm_client
from .metrics import token_diff
from .prompts import (
    AssembledPrompt,
    FeedbackItem,
    PromptChunk,
    PromptTemplate,
    build_draft_prompt,
    build_refine_prompt,
    build_summary_prompt,
)
from .textutil import canonical_json, sha256_hex

GENESIS_HASH = "0" * 64
_CASE_ID_RE = re.compile(r"[A-Za-z0-9][A-Za-z0-9._-]{0,79}")

EVENT_INGEST = "Ingest"
EVENT_SUMMARIZE = "Summarize"
EVENT_RETRIEVE = "Retrieve"
EVENT_GENERATE = "GenerateDraft"
EVENT_REFINE = "Refine"
EVENT_APPROVE = "Approve"
EVENT_EXPORT = "Export"
EVENT_PII_TRIP = "PiiGuardTrip"


@dataclass(frozen=True)
class AuditRecord:
    seq: int
    event: str
    case_id: str
    ts: str
    actor: str
    payload: dict
    digests: dict
    source_chunk_ids: tuple[str, ...]
    params: dict
    edit_stats: dict | None
    prev_hash: str
    hash: str

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "event": self.event,
            "case_id": self.case_id,
            "ts": self.ts,
            "actor": self.actor,
            "payload": self.payload,
            "digests": self.digests,
            "source_chunk_ids": list(self.source_chunk_ids),
            "params": self.params,
            "edit_stats": self.edit_stats,
            "prev_hash": self.prev_hash,
            "hash": self.hash,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "AuditRecord":
        return cls(
            seq=raw["seq"],
            event=raw["event"],
            case_id=raw["case_id"],
            ts=raw["ts"],
            actor=raw["actor"],
            payload=raw["payload"],
            digests=raw["digests"],
            source_chunk_ids=tuple(raw["source_chunk_ids"]),
            params=raw["params"],
            edit_stats=raw["edit_stats"],
            prev_hash=raw["prev_hash"],
            hash=raw["hash"],
        )


def record_hash(record_without_hash: dict) -> str:
    return sha256_hex(canonical_json(record_without_hash))


class CaseStore:
    """Per-case append-only event files plus the server-side PII maps."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.cases_dir = self.root / "cases"
        self.pii_dir = self.root / "pii"
        self.exports_dir = self.root / "exports"
        for d in (self.cases_dir, self.pii_dir, self.exports_dir):
            d.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = defaultdict(threading.Lock)
        self._locks_guard = threading.Lock()

    def lock(self, case_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks[case_id]

    def _path(self, case_id: str) -> Path:
        return self.cases_dir / f"{case_id}.events.jsonl"

    def exists(self, case_id: str) -> bool:
        return self._path(case_id).exists()

    def case_ids(self) -> list[str]:
        return sorted(
            p.name.removesuffix(".events.jsonl")
            for p in self.cases_dir.glob("*.events.jsonl")
        )

    def append(
        self,
        case_id: str,
        event: str,
        actor: str = "system",
        payload: dict | None = None,
        digests: dict | None = None,
        source_chunk_ids: list[str] | None = None,
        params: dict | None = None,
        edit_stats: dict | None = None,
    ) -> AuditRecord:
        path = self._path(case_id)
        existing = self.read(case_id) if path.exists() else []
        record = {
            "seq": len(existing) + 1,
            "event": event,
            "case_id": case_id,
            "ts": dt.datetime.now(dt.timezone.utc).isoformat(),
            "actor": actor,
            "payload": payload or {},
            "digests": digests or {},
            "source_chunk_ids": source_chunk_ids or [],
            "params": params or {},
            "edit_stats": edit_stats,
            "prev_hash": existing[-1].hash if existing else GENESIS_HASH,
        }
        record["hash"] = record_hash(record)
        with path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
        return AuditRecord.from_dict(record)

    def read(self, case_id: str) -> list[AuditRecord]:
        path = self._path(case_id)
        if not path.exists():
            raise UnknownCase(f"no case {case_id!r} on record")
        records = []
        with path.open(encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    records.append(AuditRecord.from_dict(json.loads(line)))
        return records

    def next_seq(self, case_id: str) -> int:
        """Seq the next appended record will carry (call under the case lock)."""
        return len(self.read(case_id)) + 1 if self.exists(case_id) else 1

    def verify_chain(self, case_id: str) -> None:
        """Recompute the per-case hash chain; raises on any tampering."""
        prev = GENESIS_HASH
        for record in self.read(case_id):
            raw = record.to_dict()
            claimed = raw.pop("hash")
            if record.prev_hash != prev:
                raise AuditChainBroken(
                    f"record {record.seq}: prev_hash does not match chain"
                )
            if record_hash(raw) != claimed:
                raise AuditChainBroken(f"record {record.seq}: content hash mismatch")
            prev = claimed

    def save_pii_map(self, case_id: str, pii_map) -> None:
        (self.pii_dir / f"{case_id}.json").write_text(
            json.dumps(pii_map.to_dict(), ensure_ascii=False), encoding="utf-8"
        )

    def load_pii_map(self, case_id: str):
        from .deid import PiiMap

        path = self.pii_dir / f"{case_id}.json"
        if not path.exists():
            return PiiMap()
        return PiiMap.from_dict(json.loads(path.read_text(encoding="utf-8")))


# --- domain configuration ---------------------------------------------------

RETRIEVE_K_MIN, RETRIEVE_K_MAX = 50, 200


@dataclass
class DomainConfig:
    domain_id: str
    chunk_store_path: str = ""
    index_path: str = ""
    embedder: dict = field(default_factory=lambda: {"kind": "mock-hash", "seed": 13})
    llm: dict = field(default_factory=lambda: {"kind": "mock-template"})
    summarize_model: str = "summarize-default"
    draft_model: str = "draft-default-model"
    refine_model: str = "refine-default-model"
    templates: dict = field(
        default_factory=lambda: {
            "summarize": "summary-default",
            "draft": "draft-default",
            "refine": "refine-default",
        }
    )
    templates_dir: str | None = None
    retrieve_k: int = 50
    prompt_max_chunks: int = 50
    deid_enabled: bool = False
    pii_rules_path: str | None = None
    similarity_floor: float | None = None
    export_template_id: str = "export-default"
    max_refine_iterations: int = 3
    allow_empty_retrieval: bool = False
    re_retrieve_on_refine: bool = False
    output_reserve_tokens: int = 4000
    max_output_tokens: int = 4000
    temperature: float = 0.1

    def __post_init__(self):
        if not self.chunk_store_path:
            self.chunk_store_path = f"stores/{self.domain_id}.chunks.jsonl"
        if not self.index_path:
            self.index_path = f"indexes/{self.domain_id}"
        if not (RETRIEVE_K_MIN <= self.retrieve_k <= RETRIEVE_K_MAX):
            raise ConfigurationError(
                f"retrieve_k must be in [{RETRIEVE_K_MIN}, {RETRIEVE_K_MAX}], "
                f"got {self.retrieve_k}"
            )

    def to_dict(self) -> dict:
        return {
            "domain_id": self.domain_id,
            "chunk_store_path": self.chunk_store_path,
            "index_path": self.index_path,
            "embedder": self.embedder,
            "llm": self.llm,
            "summarize_model": self.summarize_model,
            "draft_model": self.draft_model,
            "refine_model": self.refine_model,
            "templates": self.templates,
            "templates_dir": self.templates_dir,
            "retrieve_k": self.retrieve_k,
            "prompt_max_chunks": self.prompt_max_chunks,
            "deid_enabled": self.deid_enabled,
            "pii_rules_path": self.pii_rules_path,
            "similarity_floor": self.similarity_floor,
            "export_template_id": self.export_template_id,
            "max_refine_iterations": self.max_refine_iterations,
            "allow_empty_retrieval": self.allow_empty_retrieval,
            "re_retrieve_on_refine": self.re_retrieve_on_refine,
            "output_reserve_tokens": self.output_reserve_tokens,
            "max_output_tokens": self.max_output_tokens,
            "temperature": self.temperature,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "DomainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigurationError(f"unknown config fields: {sorted(unknown)}")
        return cls(**raw)

    @classmethod
    def load(cls, path: str | Path) -> "DomainConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def domain_config_path(root: str | Path, domain_id: str) -> Path:
    return Path(root) / "domains" / f"{domain_id}.json"


def build_domain_index(root: str | Path, config: DomainConfig) -> int:
    """Embed the domain's chunk store offline and persist the vector index."""
    import numpy as np

    from .embedding import embed_batch

    root = Path(root)
    chunks = load_chunk_store(root / config.chunk_store_path)
    embedder = make_embedder(config.embedder)
    vectors = embed_batch([c.text for c in chunks], embedder)
    matrix = (
        np.stack(vectors).astype(np.float64)
        if vectors
        else np.zeros((0, 1536), dtype=np.float64)
    )
    idx = build_index(chunks, matrix, config.domain_id, embedder.backend_id)
    save_index(idx, root / config.index_path)
    return len(chunks)


def ensure_domain_config(root: str | Path, domain_id: str, **overrides) -> DomainConfig:
    """Load the domain config, writing mock-backed defaults if absent."""
    path = domain_config_path(root, domain_id)
    if path.exists():
        return DomainConfig.load(path)
    config = DomainConfig(domain_id=domain_id, **overrides)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(config.to_dict(), ensure_ascii=False, indent=2), encoding="utf-8"
    )
    return config


# --- materialized case state ---------------------------------------------------

STATUS_SUBMITTED = "Submitted"
STATUS_GENERATED = "Generated"
STATUS_REFINED = "Refined"
STATUS_APPROVED = "Approved"


@dataclass
class CaseState:
    case: CaseFile
    deid_enabled: bool
    drafts: list[dict] = field(default_factory=list)
    approved_version: int | None = None
    refine_count: int = 0
    summary_text: str | None = None
    events: list[AuditRecord] = field(default_factory=list)

    @property
    def latest(self) -> dict | None:
        return self.drafts[-1] if self.drafts else None

    @property
    def status(self) -> str:
        if self.approved_version is not None:
            return STATUS_APPROVED
        if not self.drafts:
            return STATUS_SUBMITTED
        return self.drafts[-1]["status"]


def materialize(records: list[AuditRecord]) -> CaseState:
    if not records or records[0].event != EVENT_INGEST:
        raise UnknownCase("case log does not start with an intake record")
    first = records[0]
    case = CaseFile.from_dict(first.payload["case"])
    state = CaseState(case=case, deid_enabled=bool(first.params.get("deid_enabled")))
    for record in records:
        state.events.append(record)
        if record.event in (EVENT_GENERATE, EVENT_REFINE):
            draft = record.payload.get("draft")
            if draft is not None:
                state.drafts.append(draft)
            if record.event == EVENT_REFINE:
                state.refine_count += 1
        elif record.event == EVENT_SUMMARIZE:
            state.summary_text = record.payload.get("output")
        elif record.event == EVENT_APPROVE:
            state.approved_version = record.payload.get("version")
    return state


# --- domain runtime -----------------------------------------------------------


def _redacted_case(case: CaseFile, session: DeidSession) -> CaseFile:
    return replace(
        case,
        objection_letter=session.redact(case.objection_letter),
        enforcement_report=session.redact(case.enforcement_report),
        hearing_summary=(
            session.redact(case.hearing_summary) if case.hearing_summary else None
        ),
        steering_advice=(
            session.redact(case.steering_advice) if case.steering_advice else None
        ),
        attachments=tuple(
            Attachment(a.label, session.redact(a.text)) for a in case.attachments
        ),
    )


class DomainRuntime:
    """One configured domain: its index, backends, templates and case store."""

    def __init__(self, config: DomainConfig, root: str | Path):
        self.config = config
        self.root = Path(root)
        store_base = self.root / config.chunk_store_path
        index_base = self.root / config.index_path
        if not store_base.exists():
            raise ConfigurationError(f"chunk store missing: {store_base}")
        if not index_base.with_suffix(".f32").exists():
            raise ConfigurationError(f"vector index missing: {index_base}")
        self.store = CaseStore(self.root)
        self.embedder = make_embedder(config.embedder)
        self.llm = make_llm_client(config.llm)
        self.index: VectorIndex = load_index(index_base)
        self.chunks: dict[str, Chunk] = {
            c.chunk_id: c for c in load_chunk_store(store_base)
        }
        tdir = config.templates_dir
        self.templates = {
            stage: PromptTemplate.load(tid, override_dir=self.root / tdir if tdir else None)
            for stage, tid in config.templates.items()
        }
        if config.pii_rules_path:
            self.pii_rules = PiiRuleSet.from_file(self.root / config.pii_rules_path)
        else:
            self.pii_rules = default_rules()

    # -- helpers ---------------------------------------------------------

    def _guard(self) -> PiiRuleSet | None:
        return self.pii_rules if self.config.deid_enabled else None

    def _trip_guard(self, case_id: str, stage: str, texts: list[str]) -> None:
        guard = self._guard()
        if guard is None:
            return
        findings = []
        for text in texts:
            findings.extend(scan_for_pii(text, guard))
        if findings:
            self.store.append(
                case_id,
                EVENT_PII_TRIP,
                payload={
                    "stage": stage,
                    "findings": [
                        {"category": f.category, "start": f.start, "end": f.end}
                        for f in findings
                    ],
                },
            )
            raise PiiLeak(f"{len(findings)} identifier(s) in outbound {stage} payload")

    def _state(self, case_id: str) -> CaseState:
        return materialize(self.store.read(case_id))

    def _session(self, case_id: str) -> DeidSession | None:
        if not self.config.deid_enabled:
            return None
        return DeidSession.from_map(self.pii_rules, self.store.load_pii_map(case_id))

    def _complete(
        self, case_id: str, stage: str, prompt: AssembledPrompt, model: str
    ):
        self._trip_guard(case_id, stage, [prompt.system_text, prompt.user_text])
        request = CompletionRequest(
            system_message=prompt.system_text,
            user_message=prompt.user_text,
            temperature=self.config.temperature,
            max_output_tokens=self.config.max_output_tokens,
        )
        result = complete(request, self.llm, guard_rules=self._guard())
        params = {
            "model": model,
            "temperature": self.config.temperature,
            "max_output_tokens": self.config.max_output_tokens,
            "backend": result.backend_kind,
        }
        return request, result, params

    def _parse_output(self, text: str) -> tuple[tuple | None, str | None]:
        sections = parse_letter(text)
        if sections:
            kinds = {k for k, _ in sections}
            if SectionKind.EXPLANATION not in kinds or SectionKind.CONCLUSION not in kinds:
                return None, "model output is missing Explanation or Conclusion headers"
            return sections, None
        if text.strip():
            # No canonical headers at all: keep the whole output as a single
            # Explanation rather than discarding it.
            return ((SectionKind.EXPLANATION, text.strip()),), None
        return None, "model output empty"

    # -- workflow operations ----------------------------------------------

    def create_case(self, case: CaseFile) -> dict:
        case.validate()
        if case.domain_id != self.config.domain_id:
            raise MalformedRecord(
                f"case domain {case.domain_id!r} does not match {self.config.domain_id!r}"
            )
        if not _CASE_ID_RE.fullmatch(case.case_id):
            raise MalformedRecord(f"unusable case id {case.case_id!r}")
        with self.store.lock(case.case_id):
            if self.store.exists(case.case_id):
                raise MalformedRecord(f"case {case.case_id!r} already exists")
            stored = case
            if self.config.deid_enabled:
                session = DeidSession(self.pii_rules)
                stored = _redacted_case(case, session)
                self.store.save_pii_map(case.case_id, session.map)
            self.store.append(
                case.case_id,
                EVENT_INGEST,
                payload={"case": stored.to_dict()},
                digests={"case": sha256_hex(canonical_json(stored.to_dict()))},
                params={"deid_enabled": self.config.deid_enabled},
            )
        return self.case_view(case.case_id)

    def generate_draft(self, case_id: str) -> dict:
        config = self.config
        with self.store.lock(case_id):
            state = self._state(case_id)
            if state.approved_version is not None:
                raise AlreadyApproved(f"case {case_id} is already approved")
            if state.drafts:
                raise StaleVersion("draft already generated; use refine for new versions")
            case = state.case
            session = self._session(case_id)

            # Stage 1: summarize the objection into the retrieval query.
            summary_prompt = build_summary_prompt(
                case.objection_letter, case.hearing_summary, self.templates["summarize"]
            )
            request, result, params = self._complete(
                case_id, "summarize", summary_prompt, config.summarize_model
            )
            self.store.append(
                case_id,
                EVENT_SUMMARIZE,
                payload={
                    "system": summary_prompt.system_text,
                    "user": summary_prompt.user_text,
                    "output": result.text,
                },
                digests={"prompt": request.digest(), "output": sha256_hex(result.text)},
                params=params,
            )
            summary = result.text

            # Stage 2: retrieve objection chunks, then their explanations.
            self._trip_guard(case_id, "embed-query", [summary])
            query_vec = embed_text(summary, self.embedder)
            hits = top_k(
                self.index,
                query_vec,
                k=config.retrieve_k,
                kind_filter=SectionKind.OBJECTION,
                min_score=config.similarity_floor,
            )
            paired = paired_explanations(self.index, hits)
            self.store.append(
                case_id,
                EVENT_RETRIEVE,
                payload={
                    "query_text": summary,
                    "hits": [
                        {
                            "chunk_id": h.chunk_id,
                            "case_id": h.case_id,
                            "section_kind": h.section_kind.value,
                            "score": h.score,
                            "rank": h.rank,
                        }
                        for h in hits
                    ],
                    "paired_chunk_ids": [m.chunk_id for m in paired],
                },
                digests={"query": sha256_hex(summary)},
                params={
                    "k": config.retrieve_k,
                    "kind_filter": SectionKind.OBJECTION.value,
                    "similarity_floor": config.similarity_floor,
                },
            )
            if not hits and not config.allow_empty_retrieval:
                raise RetrievalEmpty("no retrieval hits for this case")

            score_by_case: dict[str, float] = {}
            for h in hits:
                score_by_case.setdefault(h.case_id, h.score)
            prompt_chunks = []
            for meta in paired:
                chunk = self.chunks.get(meta.chunk_id)
                if chunk is None:
                    continue
                text = session.redact(chunk.text) if session else chunk.text
                prompt_chunks.append(
                    PromptChunk(
                        chunk_id=chunk.chunk_id,
                        case_id=chunk.case_id,
                        section_kind=chunk.section_kind,
                        score=score_by_case.get(chunk.case_id, 0.0),
                        text=text,
                    )
                )
            if session:
                self.store.save_pii_map(case_id, session.map)

            # Stage 3: assemble the draft prompt and generate.
            draft_prompt = build_draft_prompt(
                case,
                prompt_chunks,
                self.templates["draft"],
                allow_empty_retrieval=config.allow_empty_retrieval,
                max_chunks=config.prompt_max_chunks,
                output_reserve_tokens=config.output_reserve_tokens,
            )
            request, result, params = self._complete(
                case_id, "draft", draft_prompt, config.draft_model
            )
            params["retrieve_k"] = config.retrieve_k
            sections, parse_error = self._parse_output(result.text)
            draft = None
            if parse_error is None:
                draft = {
                    "draft_id": f"{case_id}:v1",
                    "case_id": case_id,
                    "version": 1,
                    "status": STATUS_GENERATED,
                    "sections": sections_to_lists(sections),
                    "source_chunk_ids": list(draft_prompt.included_chunk_ids),
                    "prompt_digest": request.digest(),
                    "audit_seq": self.store.next_seq(case_id),
                }
            included = set(draft_prompt.included_chunk_ids)
            self.store.append(
                case_id,
                EVENT_GENERATE,
                payload={
                    "system": draft_prompt.system_text,
                    "user": draft_prompt.user_text,
                    "output": result.text,
                    "draft": draft,
                    "parse_error": parse_error,
                    "included_sources": [
                        {
                            "chunk_id": c.chunk_id,
                            "case_id": c.case_id,
                            "section_kind": c.section_kind.value,
                            "score": c.score,
                            "preview": c.text[:200],
                        }
                        for c in prompt_chunks
                        if c.chunk_id in included
                    ],
                    "truncation_report": [list(t) for t in draft_prompt.truncation_report],
                },
                digests={"prompt": request.digest(), "output": sha256_hex(result.text)},
                source_chunk_ids=list(draft_prompt.included_chunk_ids),
                params=params,
            )
            if parse_error is not None:
                raise SectionParseFailure(parse_error)
            return self.draft_view(case_id, 1)

    def refine_draft(
        self,
        case_id: str,
        feedback: list[tuple[SectionKind | None, str]],
        target_version: int,
        actor: str = "user:api",
    ) -> dict:
        config = self.config
        with self.store.lock(case_id):
            state = self._state(case_id)
            if state.approved_version is not None:
                raise AlreadyApproved(f"case {case_id} is already approved")
            latest = state.latest
            if latest is None:
                raise StaleVersion("no draft to refine yet")
            if target_version != latest["version"]:
                raise StaleVersion(
                    f"feedback targets v{target_version}, latest is v{latest['version']}"
                )
            if not feedback:
                raise EmptyFeedback("at least one feedback item required")
            if any(not instruction.strip() for _, instruction in feedback):
                raise EmptyFeedback("feedback instructions must be non-empty")
            if state.refine_count >= config.max_refine_iterations:
                raise IterationLimit(
                    f"refine limit of {config.max_refine_iterations} reached"
                )

            items = [
                FeedbackItem(
                    feedback_id=f"fb-{case_id}-v{target_version}-{i}",
                    instruction=instruction.strip(),
                    target_section=target,
                )
                for i, (target, instruction) in enumerate(feedback, start=1)
            ]
            session = self._session(case_id)

            re_retrieved: list[PromptChunk] = []
            if config.re_retrieve_on_refine and state.summary_text:
                self._trip_guard(case_id, "embed-query", [state.summary_text])
                query_vec = embed_text(state.summary_text, self.embedder)
                hits = top_k(
                    self.index,
                    query_vec,
                    k=config.retrieve_k,
                    kind_filter=SectionKind.OBJECTION,
                    min_score=config.similarity_floor,
                )
                for meta in paired_explanations(self.index, hits):
                    chunk = self.chunks.get(meta.chunk_id)
                    if chunk is None:
                        continue
                    text = session.redact(chunk.text) if session else chunk.text
                    re_retrieved.append(
                        PromptChunk(
                            chunk_id=chunk.chunk_id,
                            case_id=chunk.case_id,
                            section_kind=chunk.section_kind,
                            score=0.0,
                            text=text,
                        )
                    )
                if session:
                    self.store.save_pii_map(case_id, session.map)

            prior_text = render_letter(sections_from_lists(latest["sections"]))
            refine_prompt = build_refine_prompt(
                prior_text,
                items,
                state.case,
                re_retrieved=re_retrieved,
                template=self.templates["refine"],
            )
            request, result, params = self._complete(
                case_id, "refine", refine_prompt, config.refine_model
            )
            sections, parse_error = self._parse_output(result.text)
            version = latest["version"] + 1
            draft = None
            if parse_error is None:
                source_ids = (
                    list(refine_prompt.included_chunk_ids)
                    if re_retrieved
                    else list(latest["source_chunk_ids"])
                )
                draft = {
                    "draft_id": f"{case_id}:v{version}",
                    "case_id": case_id,
                    "version": version,
                    "status": STATUS_REFINED,
                    "sections": sections_to_lists(sections),
                    "source_chunk_ids": source_ids,
                    "prompt_digest": request.digest(),
                    "audit_seq": self.store.next_seq(case_id),
                }
            self.store.append(
                case_id,
                EVENT_REFINE,
                actor=actor,
                payload={
                    "system": refine_prompt.system_text,
                    "user": refine_prompt.user_text,
                    "output": result.text,
                    "draft": draft,
                    "parse_error": parse_error,
                    "feedback": [
                        {
                            "feedback_id": fb.feedback_id,
                            "case_id": case_id,
                            "target_version": target_version,
                            "target_section": fb.target_section.value
                            if fb.target_section
                            else None,
                            "instruction": fb.instruction,
                        }
                        for fb in items
                    ],
                },
                digests={"prompt": request.digest(), "output": sha256_hex(result.text)},
                source_chunk_ids=draft["source_chunk_ids"] if draft else [],
                params=params,
            )
            if parse_error is not None:
                raise SectionParseFailure(parse_error)
            return self.draft_view(case_id, version)

    def approve_draft(
        self,
        case_id: str,
        version: int,
        edited_sections: dict[str, str] | None = None,
        actor: str = "user:api",
    ) -> dict:
        if not actor or actor == "system":
            raise MalformedRecord("approval requires a user actor")
        with self.store.lock(case_id):
            state = self._state(case_id)
            if state.approved_version is not None:
                raise AlreadyApproved(f"case {case_id} is already approved")
            latest = state.latest
            if latest is None:
                raise StaleVersion("no draft to approve yet")
            if version != latest["version"]:
                raise StaleVersion(
                    f"approve targets v{version}, latest is v{latest['version']}"
                )

            sections = sections_from_lists(latest["sections"])
            final_sections = list(sections)
            for key, text in (edited_sections or {}).items():
                try:
                    kind = SectionKind(key)
                except ValueError as exc:
                    raise MalformedRecord(f"unknown section {key!r}") from exc
                for i, (k, _) in enumerate(final_sections):
                    if k is kind:
                        final_sections[i] = (k, text)
                        break
                else:
                    raise MalformedRecord(
                        f"draft has no {key!r} section to edit"
                    )
            final_sections = tuple(final_sections)

            ai_text = render_letter(sections)
            final_text = render_letter(final_sections)
            diff = token_diff(ai_text, final_text)
            ai_len = diff.kept + diff.removed
            final_len = diff.kept + diff.added
            edit_stats = {
                "kept": diff.kept,
                "added": diff.added,
                "removed": diff.removed,
                "retention_ratio": (diff.kept / ai_len) if ai_len else 0.0,
                "added_content_ratio": (diff.added / final_len) if final_len else 0.0,
            }

            self.store.append(
                case_id,
                EVENT_APPROVE,
                actor=actor,
                payload={
                    "version": version,
                    "edited_sections": edited_sections or {},
                    "final_sections": [[k.value, t] for k, t in final_sections],
                },
                digests={"final": sha256_hex(final_text)},
                edit_stats=edit_stats,
            )
            document = self._render_export(case_id, final_sections, approved=True)
            issued = self._reidentified(case_id, document)
            self.store.append(
                case_id,
                EVENT_EXPORT,
                actor=actor,
                payload={
                    "format": "markdown",
                    "document_redacted": document,
                },
                digests={"issued": sha256_hex(issued)},
            )
            return {
                "case_id": case_id,
                "version": version,
                "sections": [[k.value, t] for k, t in final_sections],
                "text": issued,
                "edit_stats": edit_stats,
            }

    # -- read-side views ---------------------------------------------------

    def read_audit(self, case_id: str) -> list[AuditRecord]:
        return self.store.read(case_id)

    def _reidentified(self, case_id: str, text: str) -> str:
        if not self.config.deid_enabled:
            return text
        return reidentify(text, self.store.load_pii_map(case_id))

    def _render_export(
        self, case_id: str, sections, approved: bool, version: int | None = None
    ) -> str:
        head = [f"# Advice Letter", "", f"Case: {case_id}"]
        if not approved and version is not None:
            head.append(f"Status: DRAFT v{version}")
        return "\n".join(head) + "\n\n" + render_letter(sections)

    def export_letter(self, case_id: str) -> str:
        state = self._state(case_id)
        if state.approved_version is not None:
            for record in state.events:
                if record.event == EVENT_APPROVE:
                    sections = sections_from_lists(record.payload["final_sections"])
                    document = self._render_export(case_id, sections, approved=True)
                    return self._reidentified(case_id, document)
        latest = state.latest
        if latest is None:
            raise StaleVersion("nothing to export yet")
        sections = sections_from_lists(latest["sections"])
        return self._render_export(
            case_id, sections, approved=False, version=latest["version"]
        )

    def case_view(self, case_id: str) -> dict:
        state = self._state(case_id)
        return {
            "case_id": case_id,
            "domain_id": self.config.domain_id,
            "status": state.status,
            "current_version": state.latest["version"] if state.latest else 0,
            "approved_version": state.approved_version,
            "deid_enabled": state.deid_enabled,
            "refine_count": state.refine_count,
            "max_refine_iterations": self.config.max_refine_iterations,
            "case": state.case.to_dict(),
            "drafts": [
                {"version": d["version"], "status": d["status"], "draft_id": d["draft_id"]}
                for d in state.drafts
            ],
        }

    def draft_view(self, case_id: str, version: int) -> dict:
        state = self._state(case_id)
        draft = next((d for d in state.drafts if d["version"] == version), None)
        if draft is None:
            raise StaleVersion(f"no draft v{version} for case {case_id}")
        producing = next(
            (
                r
                for r in state.events
                if r.event in (EVENT_GENERATE, EVENT_REFINE)
                and r.payload.get("draft")
                and r.payload["draft"]["version"] == version
            ),
            None,
        )
        status = draft["status"]
        if state.approved_version == version:
            status = STATUS_APPROVED
        view = dict(draft)
        view["status"] = status
        view["created_at"] = producing.ts if producing else None
        view["source_chunks"] = (
            producing.payload.get("included_sources", []) if producing else []
        )
        view["truncation_report"] = (
            producing.payload.get("truncation_report", []) if producing else []
        )
        return view

    def diff_view(self, case_id: str, version: int) -> dict:
        """Server-computed token diff between v(n-1) and v(n) for the UI."""
        from .metrics import lcs_opcodes
        from .textutil import normalize_tokens

        state = self._state(case_id)
        if version < 2:
            raise StaleVersion("diff needs a prior version")
        prev = next((d for d in state.drafts if d["version"] == version - 1), None)
        curr = next((d for d in state.drafts if d["version"] == version), None)
        if prev is None or curr is None:
            raise StaleVersion(f"missing draft versions for diff of v{version}")
        prev_by_kind = {k: t for k, t in sections_from_lists(prev["sections"])}
        curr_by_kind = {k: t for k, t in sections_from_lists(curr["sections"])}
        out = []
        for kind in SectionKind:
            if kind not in prev_by_kind and kind not in curr_by_kind:
                continue
            a = normalize_tokens(prev_by_kind.get(kind, ""))
            b = normalize_tokens(curr_by_kind.get(kind, ""))
            ops = lcs_opcodes(a, b)
            out.append(
                {
                    "section_kind": kind.value,
                    "ops": [{"op": op, "tokens": toks} for op, toks in ops],
                }
            )
        return {"case_id": case_id, "from_version": version - 1, "to_version": version,
                "sections": out}


class Registry:
    """Root-directory view over every configured domain."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._runtimes: dict[str, DomainRuntime] = {}
        self._guard = threading.Lock()
        self.store = CaseStore(self.root)

    def domain_ids(self) -> list[str]:
        domains_dir = self.root / "domains"
        if not domains_dir.exists():
            return []
        return sorted(p.stem for p in domains_dir.glob("*.json"))

    def runtime(self, domain_id: str) -> DomainRuntime:
        with self._guard:
            if domain_id not in self._runtimes:
                path = domain_config_path(self.root, domain_id)
                if not path.exists():
                    raise UnknownDomain(f"no domain {domain_id!r} configured")
                config = DomainConfig.load(path)
                self._runtimes[domain_id] = DomainRuntime(config, self.root)
            return self._runtimes[domain_id]

    def runtime_for_case(self, case_id: str) -> DomainRuntime:
        records = self.store.read(case_id)
        domain_id = records[0].payload.get("case", {}).get("domain_id")
        if domain_id is None:
            raise UnknownCase(f"case {case_id!r} has no intake record")
        return self.runtime(domain_id)
