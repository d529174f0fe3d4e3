"""Drafting-quality metrics: retention, added content, coverage, key facts.

All measures run over normalized tokens (lowercased, edge punctuation
stripped, whitespace split) so they are invariant under case and
surrounding whitespace. The diff is a true longest-common-subsequence,
not a heuristic matcher, so it can be checked against a brute-force
oracle exactly. Field headline numbers are dataset statistics this
harness computes over supplied evaluation sets, never constants.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import EmptyReference
from .textutil import normalize_tokens


@dataclass(frozen=True)
class TokenDiff:
    kept: int
    added: int
    removed: int


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    # Two-row DP keeps memory linear in the shorter side.
    if len(b) > len(a):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        curr = [0]
        append = curr.append
        for j, y in enumerate(b, start=1):
            if x == y:
                append(prev[j - 1] + 1)
            elif prev[j] >= curr[j - 1]:
                append(prev[j])
            else:
                append(curr[j - 1])
        prev = curr
    return prev[-1]


def token_diff(ai_text: str, final_text: str) -> TokenDiff:
    """Kept/added/removed token counts via LCS over normalized tokens."""
    a = normalize_tokens(ai_text)
    b = normalize_tokens(final_text)
    kept = _lcs_length(a, b)
    return TokenDiff(kept=kept, added=len(b) - kept, removed=len(a) - kept)


def lcs_opcodes(a_tokens: Sequence[str], b_tokens: Sequence[str]) -> list[tuple[str, list[str]]]:
    """LCS alignment as (op, tokens) runs with op in equal/delete/insert.

    Full-matrix backtrack; intended for letter-sized inputs (the diff the
    review UI displays), not for bulk evaluation.
    """
    m, n = len(a_tokens), len(b_tokens)
    table = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(1, m + 1):
        row = table[i]
        prev_row = table[i - 1]
        x = a_tokens[i - 1]
        for j in range(1, n + 1):
            if x == b_tokens[j - 1]:
                row[j] = prev_row[j - 1] + 1
            else:
                row[j] = prev_row[j] if prev_row[j] >= row[j - 1] else row[j - 1]
    ops: list[tuple[str, list[str]]] = []

    def emit(op: str, token: str) -> None:
        if ops and ops[-1][0] == op:
            ops[-1][1].append(token)
        else:
            ops.append((op, [token]))

    i, j = m, n
    while i > 0 and j > 0:
        if a_tokens[i - 1] == b_tokens[j - 1]:
            emit("equal", a_tokens[i - 1])
            i -= 1
            j -= 1
        elif table[i - 1][j] >= table[i][j - 1]:
            emit("delete", a_tokens[i - 1])
            i -= 1
        else:
            emit("insert", b_tokens[j - 1])
            j -= 1
    while i > 0:
        emit("delete", a_tokens[i - 1])
        i -= 1
    while j > 0:
        emit("insert", b_tokens[j - 1])
        j -= 1
    for _, toks in ops:
        toks.reverse()
    ops.reverse()
    return ops


def retention_ratio(ai_text: str, final_text: str) -> float:
    """Share of AI tokens kept verbatim in the final text (0 if AI empty)."""
    a = normalize_tokens(ai_text)
    if not a:
        return 0.0
    return _lcs_length(a, normalize_tokens(final_text)) / len(a)


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def _contains(needle: Sequence[str], haystack: Sequence[str]) -> bool:
    if not needle:
        return False
    if len(needle) > len(haystack):
        return False
    first = needle[0]
    for i in range(len(haystack) - len(needle) + 1):
        if haystack[i] == first and haystack[i : i + len(needle)] == list(needle):
            return True
    return False


@dataclass(frozen=True)
class CoverageScores:
    precision: float
    recall: float
    f1: float


def coverage_scores(
    draft_text: str,
    reference_items: Sequence[str],
    draft_claims: Sequence[str] | None = None,
) -> CoverageScores:
    """Normalized-match coverage of annotated reference items.

    Recall: fraction of reference items whose token sequence occurs
    contiguously in the draft. Precision: fraction of draft claims
    (sentences unless supplied) that match some reference item in either
    containment direction. This operationalizes "content coverage" as a
    deterministic, oracle-checkable matcher.
    """
    if not reference_items:
        raise EmptyReference("recall needs at least one reference item")
    draft_tokens = normalize_tokens(draft_text)
    item_tokens = [normalize_tokens(item) for item in reference_items]
    hits = sum(1 for toks in item_tokens if _contains(toks, draft_tokens))
    recall = hits / len(item_tokens)

    if draft_claims is None:
        from .textutil import sentences

        draft_claims = sentences(draft_text)
    if not draft_claims:
        return CoverageScores(precision=0.0, recall=recall, f1=0.0)
    matched = 0
    for claim in draft_claims:
        claim_tokens = normalize_tokens(claim)
        if any(
            _contains(toks, claim_tokens) or _contains(claim_tokens, toks)
            for toks in item_tokens
            if toks
        ):
            matched += 1
    precision = matched / len(draft_claims)
    return CoverageScores(precision=precision, recall=recall, f1=f1_score(precision, recall))


@dataclass(frozen=True)
class FactHit:
    fact_id: str
    present: bool


def key_fact_check(
    draft_text: str, facts: Sequence[tuple[str, Sequence[str]]]
) -> list[FactHit]:
    """A fact is present iff any normalized surface form occurs in the draft."""
    draft_tokens = normalize_tokens(draft_text)
    out = []
    for fact_id, surface_forms in facts:
        if not surface_forms:
            raise EmptyReference(f"fact {fact_id!r} has no surface forms")
        present = any(
            _contains(normalize_tokens(form), draft_tokens) for form in surface_forms
        )
        out.append(FactHit(fact_id=fact_id, present=present))
    return out


def length_comparison(ai_text: str, human_text: str) -> float:
    """Signed length delta (|ai| - |human|) / |human| over normalized tokens."""
    human = normalize_tokens(human_text)
    if not human:
        raise EmptyReference("human_text must be non-empty")
    ai = normalize_tokens(ai_text)
    return (len(ai) - len(human)) / len(human)


@dataclass
class MetricsReport:
    retention_ratio: float
    added_content_ratio: float
    length_delta_ratio: float
    kept: int
    added: int
    removed: int
    precision: float | None = None
    recall: float | None = None
    f1: float | None = None
    key_fact_hits: list[FactHit] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "retention_ratio": self.retention_ratio,
            "added_content_ratio": self.added_content_ratio,
            "length_delta_ratio": self.length_delta_ratio,
            "kept": self.kept,
            "added": self.added,
            "removed": self.removed,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "key_fact_hits": [
                {"fact_id": h.fact_id, "present": h.present} for h in self.key_fact_hits
            ],
        }


def evaluate_pair(
    ai_text: str,
    final_text: str,
    reference_items: Sequence[str] | None = None,
    key_facts: Sequence[tuple[str, Sequence[str]]] | None = None,
) -> MetricsReport:
    diff = token_diff(ai_text, final_text)
    ai_len = diff.kept + diff.removed
    final_len = diff.kept + diff.added
    report = MetricsReport(
        retention_ratio=(diff.kept / ai_len) if ai_len else 0.0,
        added_content_ratio=(diff.added / final_len) if final_len else 0.0,
        length_delta_ratio=((ai_len - final_len) / final_len) if final_len else 0.0,
        kept=diff.kept,
        added=diff.added,
        removed=diff.removed,
    )
    if reference_items:
        cov = coverage_scores(ai_text, reference_items)
        report.precision, report.recall, report.f1 = cov.precision, cov.recall, cov.f1
    if key_facts:
        report.key_fact_hits = key_fact_check(ai_text, key_facts)
    return report


def evaluate_set(records: Iterable[dict]) -> dict:
    """Batch harness over {case_id, ai_text, final_text, reference_items?, key_facts?}."""
    per_case = []
    for rec in records:
        key_facts = [
            (f["fact_id"], f["surface_forms"]) for f in rec.get("key_facts", [])
        ] or None
        report = evaluate_pair(
            rec["ai_text"],
            rec["final_text"],
            reference_items=rec.get("reference_items") or None,
            key_facts=key_facts,
        )
        per_case.append({"case_id": rec["case_id"], **report.to_dict()})

    def mean(key: str) -> float | None:
        values = [c[key] for c in per_case if c[key] is not None]
        return sum(values) / len(values) if values else None

    fact_total = sum(len(c["key_fact_hits"]) for c in per_case)
    fact_present = sum(
        sum(1 for h in c["key_fact_hits"] if h["present"]) for c in per_case
    )
    aggregate = {
        "cases": len(per_case),
        "recall": mean("recall"),
        "precision": mean("precision"),
        "f1": mean("f1"),
        "retention_ratio": mean("retention_ratio"),
        "added_content_ratio": mean("added_content_ratio"),
        "length_delta_ratio": mean("length_delta_ratio"),
        "key_fact_retention": (fact_present / fact_total) if fact_total else None,
    }
    return {"per_case": per_case, "aggregate": aggregate}


_TABLE_ROWS = [
    ("Content coverage", "Recall", "recall"),
    ("Content relevance", "Precision", "precision"),
    ("Overall quality", "F1-score", "f1"),
    ("Draft usability", "Retention ratio (share of AI draft kept verbatim)", "retention_ratio"),
    ("Editing volume", "Added-content ratio (share of final text newly added)", "added_content_ratio"),
    ("Draft length", "Length delta vs final letter", "length_delta_ratio"),
    ("Fact retention", "Key facts present in drafts", "key_fact_retention"),
]


def format_report_table(aggregate: dict) -> str:
    lines = [f"Evaluation over {aggregate['cases']} case(s)", ""]
    width = max(len(f"{aspect}: {metric}") for aspect, metric, _ in _TABLE_ROWS)
    for aspect, metric, key in _TABLE_ROWS:
        value = aggregate.get(key)
        shown = "n/a" if value is None else f"{value * 100:.1f}%"
        lines.append(f"{f'{aspect}: {metric}':<{width}}  {shown}")
    return "\n".join(lines)


def load_eval_set(path: str | Path) -> list[dict]:
    records = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(json.loads(line))
    return records


def write_report(report: dict, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report, ensure_ascii=False, indent=2), encoding="utf-8"
    )
