"""Deterministic prompt assembly for the three generation stages.

Templates are external text files with ``{{slot}}`` markers plus a JSON
manifest declaring the stage and slot order, so each domain can carry its
own wording. Assembly is a pure function: identical inputs produce
byte-identical prompts. Retrieved chunks are packed greedily in rank
order until the token budget is reached; included chunks are always a
rank prefix, never a cherry-picked subset.

The default wording shipped with the package is a reconstruction; the
production phrasing it stands in for is not public.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from importlib.resources import files
from pathlib import Path
from typing import Sequence

from .corpus import CaseFile, Dictum, SectionKind
from .errors import BudgetTooSmall, EmptyFeedback, RetrievalEmpty
from .textutil import count_tokens

CONTEXT_BUDGET_TOKENS = 128_000
DEFAULT_OUTPUT_RESERVE_TOKENS = 4_000

_SLOT_RE = re.compile(r"\{\{([a-z_]+)\}\}")
_EMPTY_CHUNKS_TEXT = "(none)"


class PromptStage(Enum):
    SUMMARIZE = "summarize"
    DRAFT = "draft"
    REFINE = "refine"


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    stage: PromptStage
    system_text: str
    body: str
    slots: tuple[str, ...]
    style_rules: tuple[str, ...] = ()
    dictum_clauses: dict | None = None

    @classmethod
    def load(cls, template_id: str, override_dir: str | Path | None = None) -> "PromptTemplate":
        """Load ``<id>.txt`` + ``<id>.json`` from an override dir or package data."""
        if override_dir is not None:
            base = Path(override_dir)
            body = (base / f"{template_id}.txt").read_text(encoding="utf-8")
            manifest = json.loads((base / f"{template_id}.json").read_text(encoding="utf-8"))
        else:
            pkg = files("lexdraft").joinpath("templates")
            body = pkg.joinpath(f"{template_id}.txt").read_text(encoding="utf-8")
            manifest = json.loads(pkg.joinpath(f"{template_id}.json").read_text(encoding="utf-8"))
        return cls(
            template_id=manifest["template_id"],
            stage=PromptStage(manifest["stage"]),
            system_text=manifest["system_text"],
            body=body,
            slots=tuple(manifest["slots"]),
            style_rules=tuple(manifest.get("style_rules", ())),
            dictum_clauses=manifest.get("dictum_clauses"),
        )


@dataclass(frozen=True)
class PromptChunk:
    """A retrieved chunk as it enters a prompt (text already redacted upstream)."""

    chunk_id: str
    case_id: str
    section_kind: SectionKind
    score: float
    text: str


@dataclass(frozen=True)
class AssembledPrompt:
    stage: PromptStage
    system_text: str
    user_text: str
    included_chunk_ids: tuple[str, ...] = ()
    token_count: int = 0
    truncation_report: tuple[tuple[str, str], ...] = ()
    slots_present: tuple[str, ...] = ()


def _render(body: str, values: dict[str, str | None]) -> tuple[str, tuple[str, ...]]:
    """Substitute slot markers; drop any paragraph whose slot value is absent."""
    paragraphs = body.split("\n\n")
    kept: list[str] = []
    present: list[str] = []
    for para in paragraphs:
        slots_here = _SLOT_RE.findall(para)
        if slots_here and any(values.get(s) in (None, "") for s in slots_here):
            continue
        if slots_here:
            para = _SLOT_RE.sub(lambda m: values[m.group(1)], para)
            present.extend(slots_here)
        kept.append(para)
    return "\n\n".join(kept).strip() + "\n", tuple(present)


def _chunk_block(chunk: PromptChunk, rank: int) -> str:
    return (
        f"[Source {rank}] chunk={chunk.chunk_id} case={chunk.case_id} "
        f"kind={chunk.section_kind.value} score={chunk.score:.4f}\n{chunk.text}"
    )


def _style_block(rules: Sequence[str]) -> str:
    if not rules:
        return ""
    return "Style rules:\n" + "\n".join(f"- {r}" for r in rules)


def build_summary_prompt(
    objection_text: str,
    hearing_summary: str | None = None,
    template: PromptTemplate | None = None,
) -> AssembledPrompt:
    """Prompt asking for a brief summary of the objection's key legal points."""
    if not objection_text.strip():
        raise ValueError("objection_text must be non-empty")
    template = template or PromptTemplate.load("summary-default")
    user_text, present = _render(
        template.body,
        {"objection": objection_text, "hearing_summary": hearing_summary},
    )
    return AssembledPrompt(
        stage=PromptStage.SUMMARIZE,
        system_text=template.system_text,
        user_text=user_text,
        token_count=count_tokens(template.system_text) + count_tokens(user_text),
        slots_present=present,
    )


def _dictum_clause(template: PromptTemplate, dictum: Dictum) -> str:
    clauses = template.dictum_clauses or {}
    if dictum.value in clauses:
        return clauses[dictum.value]
    # Neutral fallback for templates without custom clauses.
    if dictum is Dictum.UPHOLD:
        return "the objection is declared well-founded and the contested decision is revoked"
    return "the objection is declared unfounded and the contested decision is upheld"


def _draft_instructions(template: PromptTemplate, dictum: Dictum) -> str:
    lines = [
        "Write the complete advice letter now, based on the case documents and the reference cases above.",
        f"Intended outcome: {_dictum_clause(template, dictum)}.",
    ]
    style = _style_block(template.style_rules)
    if style:
        lines.append(style)
    return "\n".join(lines)


def _report_slot(case: CaseFile) -> str:
    parts = [case.enforcement_report]
    for att in case.attachments:
        parts.append(f"Attachment ({att.label}): {att.text}")
    return "\n\n".join(parts)


def build_draft_prompt(
    case: CaseFile,
    explanation_chunks: Sequence[PromptChunk],
    template: PromptTemplate | None = None,
    *,
    allow_empty_retrieval: bool = False,
    max_chunks: int | None = None,
    output_reserve_tokens: int = DEFAULT_OUTPUT_RESERVE_TOKENS,
    context_budget_tokens: int = CONTEXT_BUDGET_TOKENS,
) -> AssembledPrompt:
    """Slot order (a) report, (b) objection, (c) steering advice, (d) chunks, (e) instructions.

    Chunks are packed by rank until the budget (context minus output
    reserve) is reached; every dropped chunk lands in the truncation
    report with its reason.
    """
    if not explanation_chunks and not allow_empty_retrieval:
        raise RetrievalEmpty("no retrieved chunks and empty retrieval not allowed")
    template = template or PromptTemplate.load("draft-default")
    values: dict[str, str | None] = {
        "report": _report_slot(case),
        "objection": case.objection_letter,
        "steering_advice": case.steering_advice,
        "reference_chunks": _EMPTY_CHUNKS_TEXT,
        "instructions": _draft_instructions(template, case.dictum),
    }
    base_user, _ = _render(template.body, values)
    budget = context_budget_tokens - output_reserve_tokens
    system_tokens = count_tokens(template.system_text)
    # The placeholder text is one token; block substitution is token-additive.
    base_tokens = system_tokens + count_tokens(base_user) - 1
    if base_tokens > budget:
        raise BudgetTooSmall(
            f"mandatory slots need {base_tokens} tokens, budget is {budget}"
        )

    included: list[PromptChunk] = []
    truncated: list[tuple[str, str]] = []
    running = base_tokens
    block_reason: str | None = None
    for rank, chunk in enumerate(explanation_chunks, start=1):
        if block_reason is None:
            if max_chunks is not None and len(included) >= max_chunks:
                block_reason = "max_chunks"
            else:
                block_tokens = count_tokens(_chunk_block(chunk, rank))
                if running + block_tokens > budget:
                    block_reason = "token_budget"
                else:
                    included.append(chunk)
                    running += block_tokens
                    continue
        # Once one chunk is dropped, all later ranks drop too: included
        # chunks must stay a rank prefix.
        truncated.append((chunk.chunk_id, block_reason))

    if included:
        values["reference_chunks"] = "\n\n".join(
            _chunk_block(c, i) for i, c in enumerate(included, start=1)
        )
    user_text, present = _render(template.body, values)
    return AssembledPrompt(
        stage=PromptStage.DRAFT,
        system_text=template.system_text,
        user_text=user_text,
        included_chunk_ids=tuple(c.chunk_id for c in included),
        token_count=system_tokens + count_tokens(user_text),
        truncation_report=tuple(truncated),
        slots_present=present,
    )


@dataclass(frozen=True)
class FeedbackItem:
    feedback_id: str
    instruction: str
    target_section: SectionKind | None = None

    @property
    def target_label(self) -> str:
        return self.target_section.label if self.target_section else "General"


def format_feedback_items(feedback: Sequence[FeedbackItem]) -> str:
    return "\n".join(
        f"{i}. [{fb.target_label}] {fb.instruction}" for i, fb in enumerate(feedback, start=1)
    )


def build_refine_prompt(
    prior_draft_text: str,
    feedback: Sequence[FeedbackItem],
    case: CaseFile,
    re_retrieved: Sequence[PromptChunk] = (),
    template: PromptTemplate | None = None,
) -> AssembledPrompt:
    """Refinement prompt: prior draft verbatim, case docs, enumerated feedback."""
    if not feedback:
        raise EmptyFeedback("refinement needs at least one feedback item")
    template = template or PromptTemplate.load("refine-default")
    case_documents = (
        f"ENFORCEMENT REPORT:\n{_report_slot(case)}\n\n"
        f"OBJECTION LETTER:\n{case.objection_letter}"
    )
    instructions = "\n".join(
        filter(
            None,
            [
                "Revise the prior draft now, applying every feedback item above while "
                "preserving the correct parts of the draft.",
                _style_block(template.style_rules),
            ],
        )
    )
    chunks_value = (
        "\n\n".join(_chunk_block(c, i) for i, c in enumerate(re_retrieved, start=1))
        if re_retrieved
        else None
    )
    user_text, present = _render(
        template.body,
        {
            "prior_draft": prior_draft_text,
            "case_documents": case_documents,
            "reference_chunks": chunks_value,
            "feedback_items": format_feedback_items(feedback),
            "instructions": instructions,
        },
    )
    return AssembledPrompt(
        stage=PromptStage.REFINE,
        system_text=template.system_text,
        user_text=user_text,
        included_chunk_ids=tuple(c.chunk_id for c in re_retrieved),
        token_count=count_tokens(template.system_text) + count_tokens(user_text),
        slots_present=present,
    )
