"""Reversible pseudonymization of personal identifiers.

Pattern-rule matching (regular patterns plus dictionaries), not ML NER:
deterministic, auditable, and testable. Placeholders look like
``[PERSON_1]`` and are numbered per category in first-occurrence order;
the same original string always maps to the same placeholder within one
session, so placeholders stay consistent across every text of a case.
"""

from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from .textutil import sha256_hex


class PiiCategory:
    """Closed category set; values double as placeholder stems."""

    PERSON = "Person"
    ADDRESS = "Address"
    ID_NUMBER = "IdNumber"
    LICENSE_PLATE = "LicensePlate"
    PHONE = "Phone"

    ALL = (PERSON, ADDRESS, ID_NUMBER, LICENSE_PLATE, PHONE)


_PLACEHOLDER_STEMS = {
    PiiCategory.PERSON: "PERSON",
    PiiCategory.ADDRESS: "ADDRESS",
    PiiCategory.ID_NUMBER: "ID_NUMBER",
    PiiCategory.LICENSE_PLATE: "LICENSE_PLATE",
    PiiCategory.PHONE: "PHONE",
}

PLACEHOLDER_SHAPE = re.compile(r"\[[A-Z][A-Z_]*_\d+\]")


class OrphanPlaceholderWarning(UserWarning):
    """Re-identification met a placeholder-shaped token not in the map."""


@dataclass(frozen=True)
class PiiRule:
    category: str
    pattern: str | None = None
    dictionary: tuple[str, ...] = ()

    def __post_init__(self):
        if self.category not in PiiCategory.ALL:
            raise ValueError(f"unknown PII category {self.category!r}")
        if not self.pattern and not self.dictionary:
            raise ValueError("rule needs a pattern or a dictionary")

    def compiled(self) -> re.Pattern:
        parts = []
        if self.pattern:
            parts.append(self.pattern)
        if self.dictionary:
            words = sorted(self.dictionary, key=len, reverse=True)
            parts.append(r"\b(?:" + "|".join(re.escape(w) for w in words) + r")\b")
        return re.compile("|".join(f"(?:{p})" for p in parts))


@dataclass(frozen=True)
class PiiRuleSet:
    rules: tuple[PiiRule, ...]

    def __post_init__(self):
        if not self.rules:
            raise ValueError("rule set must not be empty")

    @classmethod
    def from_file(cls, path: str | Path) -> "PiiRuleSet":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls.from_list(raw)

    @classmethod
    def from_list(cls, raw: list[dict]) -> "PiiRuleSet":
        return cls(
            rules=tuple(
                PiiRule(
                    category=r["category"],
                    pattern=r.get("pattern"),
                    dictionary=tuple(r.get("dictionary", ())),
                )
                for r in raw
            )
        )


@dataclass(frozen=True)
class PiiFinding:
    category: str
    start: int
    end: int
    text: str


@dataclass
class PiiMap:
    """Reversible placeholder -> original mapping for one case."""

    entries: list[tuple[str, str, str]] = field(default_factory=list)  # (placeholder, original, category)
    source_digest: str = ""

    def originals(self) -> dict[str, str]:
        return {ph: orig for ph, orig, _ in self.entries}

    def to_dict(self) -> dict:
        return {
            "entries": [
                {"placeholder": ph, "original": orig, "category": cat}
                for ph, orig, cat in self.entries
            ],
            "source_digest": self.source_digest,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "PiiMap":
        return cls(
            entries=[
                (e["placeholder"], e["original"], e["category"])
                for e in raw.get("entries", [])
            ],
            source_digest=raw.get("source_digest", ""),
        )


def _candidate_matches(text: str, rules: PiiRuleSet) -> list[tuple[int, int, int, str]]:
    """All rule matches as (start, end, rule_order, category)."""
    out = []
    for order, rule in enumerate(rules.rules):
        for m in rule.compiled().finditer(text):
            if m.start() == m.end():
                continue
            out.append((m.start(), m.end(), order, rule.category))
    return out


def _resolve_overlaps(candidates: list[tuple[int, int, int, str]]) -> list[tuple[int, int, str]]:
    """Longest match wins; ties break on start position then rule order."""
    ordered = sorted(candidates, key=lambda c: (-(c[1] - c[0]), c[0], c[2]))
    accepted: list[tuple[int, int, str]] = []
    for start, end, _, category in ordered:
        if all(end <= s or start >= e for s, e, _ in accepted):
            accepted.append((start, end, category))
    accepted.sort()
    return accepted


class DeidSession:
    """Accumulates one PiiMap across every outbound text of a case."""

    def __init__(self, rules: PiiRuleSet):
        self.rules = rules
        self.map = PiiMap()
        self._by_original: dict[tuple[str, str], str] = {}
        self._counters: dict[str, int] = {}

    @classmethod
    def from_map(cls, rules: PiiRuleSet, pii_map: PiiMap) -> "DeidSession":
        """Resume a case session so placeholder numbering stays consistent."""
        session = cls(rules)
        session.map = pii_map
        for placeholder, original, category in pii_map.entries:
            session._by_original[(category, original)] = placeholder
            n = int(placeholder.rsplit("_", 1)[1].rstrip("]"))
            session._counters[category] = max(session._counters.get(category, 0), n)
        return session

    def _placeholder_for(self, original: str, category: str, text: str) -> str:
        key = (category, original)
        existing = self._by_original.get(key)
        if existing is not None:
            return existing
        stem = _PLACEHOLDER_STEMS[category]
        n = self._counters.get(category, 0)
        while True:
            n += 1
            candidate = f"[{stem}_{n}]"
            # A literal placeholder-shaped token in the source would break the
            # round trip; skip that number.
            if candidate not in text:
                break
        self._counters[category] = n
        self._by_original[key] = candidate
        self.map.entries.append((candidate, original, category))
        return candidate

    def redact(self, text: str) -> str:
        matches = _resolve_overlaps(_candidate_matches(text, self.rules))
        if not matches:
            self._digest(text)
            return text
        pieces = []
        cursor = 0
        for start, end, category in matches:
            pieces.append(text[cursor:start])
            pieces.append(self._placeholder_for(text[start:end], category, text))
            cursor = end
        pieces.append(text[cursor:])
        redacted = "".join(pieces)
        self._digest(redacted)
        return redacted

    def _digest(self, redacted: str) -> None:
        # Running digest over every redacted text, in order.
        self.map.source_digest = sha256_hex(self.map.source_digest + redacted)


def deidentify(text: str, rules: PiiRuleSet) -> tuple[str, PiiMap]:
    """One-shot redaction of a single document."""
    session = DeidSession(rules)
    redacted = session.redact(text)
    return redacted, session.map


def reidentify(text: str, pii_map: PiiMap) -> str:
    """Replace placeholders with originals; unknown placeholders warn and stay."""
    originals = pii_map.originals()
    for placeholder, original in originals.items():
        text = text.replace(placeholder, original)
    for token in set(PLACEHOLDER_SHAPE.findall(text)):
        if token not in originals:
            warnings.warn(
                f"placeholder {token} has no map entry; left intact",
                OrphanPlaceholderWarning,
                stacklevel=2,
            )
    return text


def scan_for_pii(payload: str, rules: PiiRuleSet) -> list[PiiFinding]:
    """Outbound-payload guard: all residual matches, empty means clean."""
    return [
        PiiFinding(category=cat, start=start, end=end, text=payload[start:end])
        for start, end, cat in _resolve_overlaps(_candidate_matches(payload, rules))
    ]


DEFAULT_RULES_FILENAME = "pii_rules.json"


def default_rules() -> PiiRuleSet:
    """Rule set shipped with the package, matching the synthetic corpus formats."""
    from importlib.resources import files

    path = files("lexdraft").joinpath("templates").joinpath(DEFAULT_RULES_FILENAME)
    return PiiRuleSet.from_list(json.loads(path.read_text(encoding="utf-8")))
