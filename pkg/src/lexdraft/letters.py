"""Rendering and parsing of structured advice letters.

Letters are structured text with one canonical ``## Header`` line per
section. Parsing matches headers exactly; anything before the first
header or under an unknown header stays attached to the surrounding
section rather than being guessed at.
"""

from __future__ import annotations

from .corpus import CANONICAL_ORDER, SectionKind

_LABEL_TO_KIND = {k.label: k for k in SectionKind}

Sections = tuple[tuple[SectionKind, str], ...]


def render_letter(sections: Sections) -> str:
    return "\n\n".join(f"## {kind.label}\n{text.strip()}" for kind, text in sections) + "\n"


def parse_letter(text: str) -> Sections:
    """Split generated text on exact canonical headers, in order of appearance."""
    current: SectionKind | None = None
    buffers: list[tuple[SectionKind, list[str]]] = []
    for line in text.splitlines():
        stripped = line.strip()
        if stripped.startswith("## "):
            kind = _LABEL_TO_KIND.get(stripped[3:].strip())
            if kind is not None:
                current = kind
                buffers.append((kind, []))
                continue
        if current is not None:
            buffers[-1][1].append(line)
    return tuple((kind, "\n".join(lines).strip()) for kind, lines in buffers)


def sections_to_lists(sections: Sections) -> list[list[str]]:
    return [[kind.value, text] for kind, text in sections]


def sections_from_lists(raw: list) -> Sections:
    return tuple((SectionKind(kind), text) for kind, text in raw)


def ordered_canonically(sections: Sections) -> Sections:
    by_kind = dict(sections)
    return tuple((k, by_kind[k]) for k in CANONICAL_ORDER if k in by_kind)
