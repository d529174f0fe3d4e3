"""Chat-completion backends: a remote provider client and a deterministic mock.

The mock is referentially transparent: its output is a pure function of
the request text. It understands the prompt structure the assembly stage
produces, which makes every pipeline contract assertable offline: summary
prompts return the objection's first sentences, draft prompts return a
skeleton letter with canonical headers, refine prompts splice each
feedback instruction into the targeted section verbatim.
"""

from __future__ import annotations

import os
import re
import threading
import time
from dataclasses import dataclass

import httpx

from .corpus import SectionKind
from .deid import PiiRuleSet, scan_for_pii
from .errors import BackendUnavailable, ContextOverflow, PiiLeak
from .letters import parse_letter, render_letter
from .prompts import CONTEXT_BUDGET_TOKENS
from .textutil import canonical_json, count_tokens, sentences, sha256_hex

DEFAULT_TEMPERATURE = 0.1
DEFAULT_MAX_OUTPUT_TOKENS = 4_000


@dataclass(frozen=True)
class CompletionRequest:
    system_message: str
    user_message: str
    temperature: float = DEFAULT_TEMPERATURE
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS

    def validate(self) -> None:
        if not self.system_message.strip() or not self.user_message.strip():
            raise ValueError("system and user messages must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    @property
    def prompt_tokens(self) -> int:
        return count_tokens(self.system_message) + count_tokens(self.user_message)

    def digest(self) -> str:
        return sha256_hex(
            canonical_json(
                {
                    "system": self.system_message,
                    "user": self.user_message,
                    "temperature": self.temperature,
                    "max_output_tokens": self.max_output_tokens,
                }
            )
        )


@dataclass(frozen=True)
class CompletionResult:
    text: str
    prompt_tokens: int
    output_tokens: int
    backend_kind: str
    request_digest: str


def _parse_blocks(user_text: str) -> dict[str, str]:
    """Split a prompt into its '### HEADER' blocks."""
    blocks: dict[str, str] = {}
    header: str | None = None
    lines: list[str] = []
    for line in user_text.splitlines():
        if line.startswith("### "):
            if header is not None:
                blocks[header] = "\n".join(lines).strip()
            header = line[4:].strip()
            lines = []
        elif header is not None:
            lines.append(line)
    if header is not None:
        blocks[header] = "\n".join(lines).strip()
    return blocks


def _first_sentences(text: str, n: int = 2) -> str:
    parts = sentences(text)
    return " ".join(parts[:n]) if parts else text.strip()


_OUTCOME_RE = re.compile(r"^Intended outcome: (.+?)\.?$", re.MULTILINE)
_SOURCE_RE = re.compile(r"^\[Source \d+\][^\n]*\n", re.MULTILINE)


class MockTemplateClient:
    """Offline stand-in model; output depends only on the request bytes."""

    kind = "mock-template"

    def generate(self, request: CompletionRequest) -> str:
        blocks = _parse_blocks(request.user_message)
        if "REVISION INSTRUCTIONS" in blocks:
            return self._refine(blocks)
        if "DRAFTING INSTRUCTIONS" in blocks:
            return self._draft(blocks)
        if "SUMMARY TASK" in blocks:
            return self._summarize(blocks)
        return f"Acknowledged: {_first_sentences(request.user_message, 1)}"

    def _summarize(self, blocks: dict[str, str]) -> str:
        objection = blocks.get("OBJECTION LETTER", "")
        summary = _first_sentences(objection, 2)
        hearing = blocks.get("HEARING SUMMARY")
        if hearing:
            summary += " " + _first_sentences(hearing, 1)
        return summary

    def _draft(self, blocks: dict[str, str]) -> str:
        report = blocks.get("ENFORCEMENT REPORT", "")
        objection = blocks.get("OBJECTION LETTER", "")
        steering = blocks.get("STEERING ADVICE")
        instructions = blocks.get("DRAFTING INSTRUCTIONS", "")
        outcome_match = _OUTCOME_RE.search(instructions)
        outcome = outcome_match.group(1) if outcome_match else "the objection is decided as instructed"

        excerpt = ""
        references = blocks.get("REFERENCE CASES", "")
        if references and references != "(none)":
            first_chunk = _SOURCE_RE.split(references)[1] if _SOURCE_RE.search(references) else references
            first_chunk = first_chunk.split("[Source", 1)[0]
            excerpt = _first_sentences(first_chunk, 2)

        steering_note = f"Following the steering advice ({steering}), " if steering else ""
        explanation = (
            f"{steering_note}the arguments raised were weighed against the enforcement "
            f"report and comparable earlier cases."
        )
        if excerpt:
            explanation += f" In a comparable case the department considered: {excerpt}"
        explanation += " On that basis the department reaches the conclusion below."

        sections = (
            (SectionKind.CASE_DETAILS, report),
            (
                SectionKind.OBJECTION,
                "The objector has lodged an objection against the contested decision. "
                + _first_sentences(objection, 2),
            ),
            (
                SectionKind.HEARING,
                "Any hearing held in this case was taken into account in the "
                "assessment below.",
            ),
            (SectionKind.EXPLANATION, explanation),
            (SectionKind.CONCLUSION, f"In view of the foregoing, {outcome}."),
        )
        return render_letter(sections)

    def _refine(self, blocks: dict[str, str]) -> str:
        prior = blocks.get("PRIOR DRAFT", "")
        feedback = blocks.get("FEEDBACK", "")
        sections = list(parse_letter(prior))
        if not sections:
            sections = [(SectionKind.EXPLANATION, prior.strip())]
        labels = {kind.label: i for i, (kind, _) in enumerate(sections)}
        for line in feedback.splitlines():
            match = re.match(r"^\d+\.\s+\[(.+?)\]\s+(.*)$", line.strip())
            if not match:
                continue
            target_label, instruction = match.group(1), match.group(2)
            idx = labels.get(target_label, labels.get(SectionKind.EXPLANATION.label))
            if idx is None:
                idx = len(sections) - 1
            kind, text = sections[idx]
            sections[idx] = (kind, f"{text}\n\n{instruction}")
        return render_letter(tuple(sections))


class RemoteChatClient:
    """OpenAI-compatible chat-completions client with bounded retries.

    Concurrent completions are allowed up to a configurable in-flight cap.
    """

    kind = "remote"

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key_env: str = "LEXDRAFT_API_KEY",
        timeout: float = 120.0,
        max_in_flight: int = 4,
        transport: httpx.BaseTransport | None = None,
        sleep=time.sleep,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self._client = httpx.Client(timeout=timeout, transport=transport)
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def generate(self, request: CompletionRequest) -> str:
        payload = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system_message},
                {"role": "user", "content": request.user_message},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        key = os.environ.get(self.api_key_env, "")
        headers = {"Authorization": f"Bearer {key}"} if key else {}
        last_error: Exception | None = None
        for backoff in (1.0, 2.0, 4.0):
            try:
                with self._slots:
                    resp = self._client.post(
                        f"{self.endpoint}/chat/completions", json=payload, headers=headers
                    )
            except httpx.TransportError as exc:
                last_error = exc
                self._sleep(backoff)
                continue
            if resp.status_code >= 500:
                last_error = BackendUnavailable(f"server error {resp.status_code}")
                self._sleep(backoff)
                continue
            if resp.status_code >= 400:
                raise BackendUnavailable(f"completion rejected: {resp.status_code}")
            return resp.json()["choices"][0]["message"]["content"]
        raise BackendUnavailable(f"completion backend unreachable: {last_error}")


LlmClient = MockTemplateClient | RemoteChatClient


def make_llm_client(spec: dict, transport: httpx.BaseTransport | None = None) -> LlmClient:
    kind = spec.get("kind", "mock-template")
    if kind == "mock-template":
        return MockTemplateClient()
    if kind == "remote":
        return RemoteChatClient(
            endpoint=spec["endpoint"],
            model=spec.get("model", "gpt-4o"),
            api_key_env=spec.get("api_key_env", "LEXDRAFT_API_KEY"),
            max_in_flight=spec.get("max_in_flight", 4),
            transport=transport,
        )
    raise ValueError(f"unknown llm kind {kind!r}")


def complete(
    request: CompletionRequest,
    client: LlmClient,
    guard_rules: PiiRuleSet | None = None,
) -> CompletionResult:
    """Run one completion; budget and PII checks happen before any transmission."""
    request.validate()
    if request.prompt_tokens > CONTEXT_BUDGET_TOKENS:
        raise ContextOverflow(
            f"prompt is {request.prompt_tokens} tokens; budget {CONTEXT_BUDGET_TOKENS}"
        )
    if guard_rules is not None:
        findings = scan_for_pii(request.system_message, guard_rules) + scan_for_pii(
            request.user_message, guard_rules
        )
        if findings:
            raise PiiLeak(
                f"{len(findings)} residual identifier(s) in outbound payload; not sent"
            )
    text = client.generate(request)
    return CompletionResult(
        text=text,
        prompt_tokens=request.prompt_tokens,
        output_tokens=count_tokens(text),
        backend_kind=client.kind,
        request_digest=request.digest(),
    )
