"""Corpus ingestion: letter parsing, section chunking, synthetic data.

Historical advice letters arrive as JSON Lines records with explicit
section labels (no header heuristics). Each letter is segmented into at
most five labeled sections and chunked one-chunk-per-section; the chunk
is the retrieval unit. A seeded synthetic generator stands in for the
real corpus so every downstream contract is testable offline.
"""

from __future__ import annotations

import datetime as dt
import json
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

from .errors import MalformedRecord, MissingSection, UnknownSectionLabel
from .textutil import count_tokens


class SectionKind(Enum):
    """Closed taxonomy of advice-letter sections, in canonical order."""

    CASE_DETAILS = "case_details"
    OBJECTION = "objection"
    HEARING = "hearing"
    EXPLANATION = "explanation"
    CONCLUSION = "conclusion"

    @property
    def label(self) -> str:
        return _LABELS[self]


_LABELS = {
    SectionKind.CASE_DETAILS: "Case Details",
    SectionKind.OBJECTION: "Objection",
    SectionKind.HEARING: "Hearing",
    SectionKind.EXPLANATION: "Explanation",
    SectionKind.CONCLUSION: "Conclusion",
}

CANONICAL_ORDER = list(SectionKind)
REQUIRED_KINDS = (SectionKind.EXPLANATION, SectionKind.CONCLUSION)


class Dictum(Enum):
    """Human-decided case outcome; an input, never produced by the system."""

    UPHOLD = "uphold"
    REJECT = "reject"


@dataclass(frozen=True)
class AdviceLetter:
    case_id: str
    domain_id: str
    sections: tuple[tuple[SectionKind, str], ...]
    dictum: Dictum
    issued_date: dt.date

    def section_text(self, kind: SectionKind) -> str | None:
        for k, text in self.sections:
            if k is kind:
                return text
        return None


@dataclass(frozen=True)
class Chunk:
    """One section of one letter; the unit of retrieval."""

    chunk_id: str
    case_id: str
    section_kind: SectionKind
    text: str
    token_count: int


@dataclass(frozen=True)
class Attachment:
    label: str
    text: str


@dataclass(frozen=True)
class CaseFile:
    """A new objection case as submitted by the jurist."""

    case_id: str
    domain_id: str
    objection_letter: str
    enforcement_report: str
    dictum: Dictum
    attachments: tuple[Attachment, ...] = ()
    hearing_summary: str | None = None
    steering_advice: str | None = None

    def validate(self) -> None:
        if not self.objection_letter.strip():
            raise MalformedRecord("objection_letter must be non-empty")
        if not self.enforcement_report.strip():
            raise MalformedRecord("enforcement_report must be non-empty")

    @classmethod
    def from_dict(cls, raw: dict) -> "CaseFile":
        try:
            dictum = Dictum(raw["dictum"])
        except (KeyError, ValueError) as exc:
            raise MalformedRecord(f"bad or missing dictum: {exc}") from exc
        case = cls(
            case_id=str(raw["case_id"]),
            domain_id=str(raw["domain_id"]),
            objection_letter=str(raw.get("objection_letter", "")),
            enforcement_report=str(raw.get("enforcement_report", "")),
            dictum=dictum,
            attachments=tuple(
                Attachment(str(a["label"]), str(a["text"]))
                for a in raw.get("attachments", [])
            ),
            hearing_summary=raw.get("hearing_summary"),
            steering_advice=raw.get("steering_advice"),
        )
        case.validate()
        return case

    def to_dict(self) -> dict:
        out: dict = {
            "case_id": self.case_id,
            "domain_id": self.domain_id,
            "objection_letter": self.objection_letter,
            "enforcement_report": self.enforcement_report,
            "dictum": self.dictum.value,
            "attachments": [{"label": a.label, "text": a.text} for a in self.attachments],
        }
        if self.hearing_summary is not None:
            out["hearing_summary"] = self.hearing_summary
        if self.steering_advice is not None:
            out["steering_advice"] = self.steering_advice
        return out


# --- parsing and chunking ---------------------------------------------------

_KEY_TO_KIND = {k.value: k for k in SectionKind}


def parse_letter_record(raw: dict) -> AdviceLetter:
    """Parse one corpus record into a validated letter.

    Sections are reordered into the canonical sequence; kinds must be
    unique; Explanation and Conclusion are mandatory.
    """
    for key in ("case_id", "domain_id", "dictum", "issued_date", "sections"):
        if key not in raw:
            raise MalformedRecord(f"record missing field {key!r}")
    try:
        dictum = Dictum(raw["dictum"])
    except ValueError as exc:
        raise MalformedRecord(f"unknown dictum {raw['dictum']!r}") from exc
    try:
        issued = dt.date.fromisoformat(str(raw["issued_date"]))
    except ValueError as exc:
        raise MalformedRecord(f"bad issued_date {raw['issued_date']!r}") from exc

    sections_raw = raw["sections"]
    if not isinstance(sections_raw, dict):
        raise MalformedRecord("sections must be a mapping of label -> text")
    by_kind: dict[SectionKind, str] = {}
    for label, text in sections_raw.items():
        kind = _KEY_TO_KIND.get(label)
        if kind is None:
            raise UnknownSectionLabel(f"unknown section label {label!r}")
        if kind in by_kind:
            raise MalformedRecord(f"duplicate section {label!r}")
        if not str(text).strip():
            raise MalformedRecord(f"section {label!r} is empty")
        by_kind[kind] = str(text)
    for kind in REQUIRED_KINDS:
        if kind not in by_kind:
            raise MissingSection(f"section {kind.value!r} is required")

    ordered = tuple((k, by_kind[k]) for k in CANONICAL_ORDER if k in by_kind)
    return AdviceLetter(
        case_id=str(raw["case_id"]),
        domain_id=str(raw["domain_id"]),
        sections=ordered,
        dictum=dictum,
        issued_date=issued,
    )


def chunk_id_for(case_id: str, kind: SectionKind) -> str:
    return f"{case_id}:{kind.value}"


def chunk_letter(letter: AdviceLetter) -> list[Chunk]:
    """One chunk per section, ids deterministic, token counts whitespace-based."""
    return [
        Chunk(
            chunk_id=chunk_id_for(letter.case_id, kind),
            case_id=letter.case_id,
            section_kind=kind,
            text=text,
            token_count=count_tokens(text),
        )
        for kind, text in letter.sections
    ]


@dataclass
class IngestSummary:
    domain_id: str
    letters: int = 0
    chunks: int = 0
    per_kind: dict[str, int] = field(default_factory=dict)
    errors: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "domain_id": self.domain_id,
            "letters": self.letters,
            "chunks": self.chunks,
            "per_kind": dict(self.per_kind),
            "errors": list(self.errors),
        }


def ingest_corpus(records: Iterable[dict], domain_id: str, store_path: str | Path) -> IngestSummary:
    """Parse, chunk and persist a record stream for one domain.

    Malformed records are skipped and reported in the summary; ingest is
    single-writer and rewrites the chunk store in full (idempotent for an
    identical stream).
    """
    summary = IngestSummary(domain_id=domain_id)
    store_path = Path(store_path)
    store_path.parent.mkdir(parents=True, exist_ok=True)
    with store_path.open("w", encoding="utf-8") as fh:
        for i, raw in enumerate(records):
            try:
                letter = parse_letter_record(raw)
                if letter.domain_id != domain_id:
                    raise MalformedRecord(
                        f"record domain {letter.domain_id!r} does not match {domain_id!r}"
                    )
            except MalformedRecord as exc:
                summary.errors.append(f"record {i}: {exc}")
                continue
            for chunk in chunk_letter(letter):
                fh.write(json.dumps(_chunk_to_dict(chunk), ensure_ascii=False) + "\n")
                summary.chunks += 1
                key = chunk.section_kind.value
                summary.per_kind[key] = summary.per_kind.get(key, 0) + 1
            summary.letters += 1
    return summary


def _chunk_to_dict(chunk: Chunk) -> dict:
    return {
        "chunk_id": chunk.chunk_id,
        "case_id": chunk.case_id,
        "section_kind": chunk.section_kind.value,
        "text": chunk.text,
        "token_count": chunk.token_count,
    }


def load_chunk_store(store_path: str | Path) -> list[Chunk]:
    chunks = []
    with Path(store_path).open(encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            raw = json.loads(line)
            chunks.append(
                Chunk(
                    chunk_id=raw["chunk_id"],
                    case_id=raw["case_id"],
                    section_kind=SectionKind(raw["section_kind"]),
                    text=raw["text"],
                    token_count=int(raw["token_count"]),
                )
            )
    return chunks


def write_corpus_jsonl(records: Iterable[dict], path: str | Path) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
            n += 1
    return n


def read_corpus_jsonl(path: str | Path) -> Iterator[dict]:
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield json.loads(line)


# --- synthetic corpus ---------------------------------------------------------
#
# A seeded stand-in for the confidential production corpus. Every letter
# carries three key case facts (offense date, violation type, location)
# in its Explanation and exactly three personal identifiers (name,
# address, telephone number) so de-identification and fact-retention
# checks have known ground truth.

FIRST_NAMES = [
    "Jan", "Sanne", "Pieter", "Femke", "Daan", "Lotte",
    "Bram", "Anouk", "Thijs", "Roos", "Willem", "Eva",
]
LAST_NAMES = [
    "Jansen", "de Vries", "Bakker", "Visser", "Smit", "Meijer",
    "Mulder", "Bos", "Vos", "Peters", "Hendriks", "Dekker",
]
STREETS = [
    "Keizersgracht", "Prinsengracht", "Herengracht", "Marnixstraat",
    "Lindenlaan", "Singelstraat", "Polderweg", "Raamplein",
]
LOCATIONS = [
    "Westerpark", "Museumplein", "the Albert Cuyp market", "Sloterplas",
    "the Nieuwmarkt", "Oosterdok", "the Vondelpark entrance", "Zeeburgereiland",
]
VIOLATIONS = [
    "household waste placed next to an underground container",
    "a waste bag offered on the wrong collection day",
    "cardboard dumped beside the paper container",
    "a vehicle parked in a designated tow-away zone",
    "a bicycle attached outside the designated racks",
    "a boat moored without a valid vignette",
]
ARGUMENTS = [
    "the waste was placed there by an unknown third party",
    "the objector was abroad on the relevant date",
    "the signage at the location was missing or illegible",
    "the fine is disproportionate to the alleged conduct",
    "the container was full and no alternative was available nearby",
    "a valid permit was clearly displayed at the time",
    "the objector never received the original decision",
    "the report confuses the objector with another resident",
]
STEERING_HINTS = [
    "Emphasize the proportionality assessment of the fine amount.",
    "Address the signage argument explicitly and cite the placement rules.",
    "Keep the tone extra empathetic; the objector is a first-time offender.",
    "Reference the duty of care for household waste disposal.",
]

_MONTHS = [
    "January", "February", "March", "April", "May", "June",
    "July", "August", "September", "October", "November", "December",
]

UPHOLD_MARKER = "well-founded"
REJECT_MARKER = "unfounded"


def _date_forms(d: dt.date) -> tuple[str, str]:
    short = f"{d.day:02d}-{d.month:02d}-{d.year}"
    long = f"{d.day} {_MONTHS[d.month - 1]} {d.year}"
    return short, long


@dataclass(frozen=True)
class SyntheticLetter:
    """A generated corpus record plus its seeded ground truth."""

    record: dict
    key_facts: dict[str, list[str]]
    pii_values: dict[str, list[str]]

    @property
    def full_text(self) -> str:
        return "\n\n".join(self.record["sections"].values())


@dataclass(frozen=True)
class SyntheticCase:
    case: CaseFile
    key_facts: dict[str, list[str]]
    pii_values: dict[str, list[str]]


def _conclusion_text(dictum: Dictum) -> str:
    if dictum is Dictum.UPHOLD:
        return (
            f"The objection is declared {UPHOLD_MARKER}. "
            "The contested decision is revoked and the fine is cancelled."
        )
    return (
        f"The objection is declared {REJECT_MARKER}. "
        "The contested decision is upheld and the fine remains due."
    )


def synthesize_letters(seed: int, n_letters: int, domain_id: str) -> list[SyntheticLetter]:
    """Deterministic synthetic advice letters with seeded facts and PII."""
    if n_letters < 0:
        raise ValueError("n_letters must be >= 0")
    letters = []
    for i in range(n_letters):
        rng = random.Random(f"{seed}:{domain_id}:{i}")
        case_id = f"{domain_id}-{i:05d}"
        name = f"{rng.choice(FIRST_NAMES)} {rng.choice(LAST_NAMES)}"
        address = f"{rng.choice(STREETS)} {rng.randrange(1, 300)}"
        phone = f"06-{rng.randrange(10_000_000, 100_000_000)}"
        offense = dt.date(2022, 1, 1) + dt.timedelta(days=rng.randrange(0, 1200))
        issued = offense + dt.timedelta(days=rng.randrange(20, 90))
        date_short, date_long = _date_forms(offense)
        violation = rng.choice(VIOLATIONS)
        location = rng.choice(LOCATIONS)
        argument = rng.choice(ARGUMENTS)
        dictum = Dictum.UPHOLD if rng.random() < 0.3 else Dictum.REJECT

        sections = {
            "case_details": (
                f"This case concerns an administrative fine imposed after an inspection "
                f"on {date_short}. The objector resides at {address}. The contested "
                f"decision was issued under reference {case_id}."
            ),
            "objection": (
                f"Objector {name} has lodged a timely objection against the decision. "
                f"The objector argues that {argument}, and requests that the fine be "
                f"withdrawn."
            ),
            "hearing": (
                f"The objector was heard by telephone on {_date_forms(issued - dt.timedelta(days=10))[0]} "
                f"and could be reached at {phone}. During the hearing the objector "
                f"maintained that {argument}."
            ),
            "explanation": (
                f"The enforcement report shows that on {date_short} an officer observed "
                f"{violation} at {location}. The objector has argued that {argument}. "
                f"Under the applicable municipal waste and public-space regulations, the "
                f"person to whom the conduct can be attributed is responsible for the "
                f"violation. Weighing the report against the objection, the department "
                f"finds the report {'insufficiently conclusive' if dictum is Dictum.UPHOLD else 'decisive'} "
                f"on this point. The assessment also covered the proportionality of the "
                f"sanction for {violation} observed at {location} on {date_short}."
            ),
            "conclusion": _conclusion_text(dictum),
        }
        record = {
            "case_id": case_id,
            "domain_id": domain_id,
            "dictum": dictum.value,
            "issued_date": issued.isoformat(),
            "sections": sections,
        }
        letters.append(
            SyntheticLetter(
                record=record,
                key_facts={
                    "offense_date": [date_short, date_long],
                    "violation_type": [violation],
                    "location": [location],
                },
                pii_values={"Person": [name], "Address": [address], "Phone": [phone]},
            )
        )
    return letters


def generate_synthetic_corpus(seed: int, n_letters: int, domain_id: str) -> Iterator[dict]:
    """Record stream for ingest; byte-identical for identical (seed, n, domain)."""
    for letter in synthesize_letters(seed, n_letters, domain_id):
        yield letter.record


def synthesize_cases(seed: int, n_cases: int, domain_id: str) -> list[SyntheticCase]:
    """Deterministic new objection cases for pipeline and guard tests.

    Objection and report texts seed four identifier instances (name and
    phone in the objection, license plate and reference id in the report)
    and carry the three key facts in the report.
    """
    cases = []
    for i in range(n_cases):
        rng = random.Random(f"case:{seed}:{domain_id}:{i}")
        case_id = f"case-{domain_id}-{seed}-{i:04d}"
        name = f"{rng.choice(FIRST_NAMES)} {rng.choice(LAST_NAMES)}"
        phone = f"06-{rng.randrange(10_000_000, 100_000_000)}"
        plate = (
            f"{chr(rng.randrange(65, 91))}{chr(rng.randrange(65, 91))}-"
            f"{rng.randrange(100, 1000)}-"
            f"{chr(rng.randrange(65, 91))}{chr(rng.randrange(65, 91))}"
        )
        ref_id = f"ID-{rng.randrange(1_000_000, 10_000_000)}"
        offense = dt.date(2023, 1, 1) + dt.timedelta(days=rng.randrange(0, 900))
        date_short, date_long = _date_forms(offense)
        violation = rng.choice(VIOLATIONS)
        location = rng.choice(LOCATIONS)
        argument = rng.choice(ARGUMENTS)
        dictum = Dictum.UPHOLD if rng.random() < 0.3 else Dictum.REJECT

        objection = (
            f"My name is {name} and I object to the fine imposed on me. "
            f"I believe that {argument}. The decision came as a complete surprise "
            f"and I ask you to reconsider it. You can reach me at {phone}."
        )
        report = (
            f"On {date_short} the municipal officer observed {violation} at {location}. "
            f"The situation was documented on site under reference {ref_id}. "
            f"A vehicle with registration {plate} was recorded near the scene."
        )
        case = CaseFile(
            case_id=case_id,
            domain_id=domain_id,
            objection_letter=objection,
            enforcement_report=report,
            dictum=dictum,
            hearing_summary=(
                f"During the telephone hearing the objector repeated that {argument}."
                if rng.random() < 0.5
                else None
            ),
            steering_advice=rng.choice(STEERING_HINTS) if rng.random() < 0.5 else None,
        )
        cases.append(
            SyntheticCase(
                case=case,
                key_facts={
                    "offense_date": [date_short, date_long],
                    "violation_type": [violation],
                    "location": [location],
                },
                pii_values={
                    "Person": [name],
                    "Phone": [phone],
                    "LicensePlate": [plate],
                    "IdNumber": [ref_id],
                },
            )
        )
    return cases
