import httpx
import pytest

from lexdraft.corpus import Dictum, SectionKind, synthesize_cases
from lexdraft.deid import PiiRule, PiiRuleSet
from lexdraft.errors import BackendUnavailable, ContextOverflow, PiiLeak
from lexdraft.letters import parse_letter
from lexdraft.llm import (
    CompletionRequest,
    MockTemplateClient,
    RemoteChatClient,
    complete,
)
from lexdraft.prompts import (
    FeedbackItem,
    PromptChunk,
    build_draft_prompt,
    build_refine_prompt,
    build_summary_prompt,
)

RULES = PiiRuleSet(rules=(PiiRule(category="Phone", pattern=r"\b06-\d{8}\b"),))


class SentinelClient:
    """Fails the test if the pipeline ever reaches the backend."""

    kind = "sentinel"

    def generate(self, request):  # pragma: no cover - must never run
        raise AssertionError("backend must not be called")


def _case(**overrides):
    from dataclasses import replace

    case = synthesize_cases(77, 1, "waste")[0].case
    return replace(case, **overrides) if overrides else case


def _chunks(n=3):
    return [
        PromptChunk(
            chunk_id=f"c{i}:explanation",
            case_id=f"c{i}",
            section_kind=SectionKind.EXPLANATION,
            score=0.9 - i * 0.1,
            text=f"Reference reasoning {i}. It weighs the report against the objection.",
        )
        for i in range(n)
    ]


class TestCompletionRequest:
    def test_digest_binds_request_bytes(self):
        a = CompletionRequest("sys", "user text")
        b = CompletionRequest("sys", "user text")
        c = CompletionRequest("sys", "user text!")
        assert a.digest() == b.digest()
        assert a.digest() != c.digest()

    def test_default_temperature(self):
        assert CompletionRequest("s", "u").temperature == 0.1

    def test_empty_messages_rejected(self):
        with pytest.raises(ValueError):
            complete(CompletionRequest(" ", "u"), MockTemplateClient())


class TestGuards:
    def test_context_overflow_before_any_call(self):
        request = CompletionRequest("sys", "tok " * 128_001)
        with pytest.raises(ContextOverflow):
            complete(request, SentinelClient())

    def test_pii_guard_blocks_transmission(self):
        request = CompletionRequest("sys", "bel mij op 06-12345678 vandaag")
        with pytest.raises(PiiLeak):
            complete(request, SentinelClient(), guard_rules=RULES)

    def test_clean_payload_passes_guard(self):
        prompt = build_summary_prompt("Het besluit klopt niet. Er was een vergunning.")
        request = CompletionRequest(prompt.system_text, prompt.user_text)
        result = complete(request, MockTemplateClient(), guard_rules=RULES)
        assert result.text


class TestMockTemplate:
    def test_deterministic(self):
        prompt = build_summary_prompt("Eerste zin. Tweede zin. Derde zin.")
        request = CompletionRequest(prompt.system_text, prompt.user_text)
        client = MockTemplateClient()
        assert client.generate(request) == client.generate(request)

    def test_summary_returns_first_two_sentences(self):
        prompt = build_summary_prompt("Eerste zin hier. Tweede zin hier. Derde zin.")
        result = complete(
            CompletionRequest(prompt.system_text, prompt.user_text), MockTemplateClient()
        )
        assert result.text == "Eerste zin hier. Tweede zin hier."

    def test_draft_output_contains_all_five_canonical_headers(self):
        prompt = build_draft_prompt(_case(), _chunks())
        result = complete(
            CompletionRequest(prompt.system_text, prompt.user_text), MockTemplateClient()
        )
        for kind in SectionKind:
            assert f"## {kind.label}" in result.text
        sections = dict(parse_letter(result.text))
        assert set(sections) == set(SectionKind)

    def test_draft_echoes_dictum_clause(self):
        reject = build_draft_prompt(_case(dictum=Dictum.REJECT), _chunks())
        uphold = build_draft_prompt(_case(dictum=Dictum.UPHOLD), _chunks())
        client = MockTemplateClient()
        reject_text = client.generate(CompletionRequest(reject.system_text, reject.user_text))
        uphold_text = client.generate(CompletionRequest(uphold.system_text, uphold.user_text))
        assert "unfounded" in dict(parse_letter(reject_text))[SectionKind.CONCLUSION]
        assert "well-founded" in dict(parse_letter(uphold_text))[SectionKind.CONCLUSION]

    def test_draft_echoes_first_reference_excerpt(self):
        prompt = build_draft_prompt(_case(), _chunks())
        text = MockTemplateClient().generate(
            CompletionRequest(prompt.system_text, prompt.user_text)
        )
        assert "Reference reasoning 0." in text

    def test_refine_splices_instruction_into_target_section(self):
        case = _case()
        draft_prompt = build_draft_prompt(case, _chunks())
        client = MockTemplateClient()
        draft_text = client.generate(
            CompletionRequest(draft_prompt.system_text, draft_prompt.user_text)
        )
        feedback = [
            FeedbackItem(
                feedback_id="fb-1",
                instruction="Add the proportionality assessment explicitly.",
                target_section=SectionKind.EXPLANATION,
            )
        ]
        refine_prompt = build_refine_prompt(draft_text, feedback, case)
        revised = client.generate(
            CompletionRequest(refine_prompt.system_text, refine_prompt.user_text)
        )
        sections = dict(parse_letter(revised))
        assert "Add the proportionality assessment explicitly." in sections[SectionKind.EXPLANATION]
        assert "proportionality" not in sections[SectionKind.CONCLUSION]

    def test_usage_counts(self):
        prompt = build_summary_prompt("Een zin. Nog een.")
        result = complete(
            CompletionRequest(prompt.system_text, prompt.user_text), MockTemplateClient()
        )
        assert result.prompt_tokens == prompt.token_count
        assert result.output_tokens > 0
        assert result.backend_kind == "mock-template"


class TestRemoteChat:
    def _client(self, handler, sleeps=None):
        recorded = sleeps if sleeps is not None else []
        return RemoteChatClient(
            endpoint="https://llm.example/v1",
            model="test-chat",
            transport=httpx.MockTransport(handler),
            sleep=recorded.append,
        )

    def test_success(self):
        def handler(request):
            assert request.url.path.endswith("/chat/completions")
            return httpx.Response(
                200, json={"choices": [{"message": {"content": "antwoord"}}]}
            )

        result = complete(CompletionRequest("s", "u"), self._client(handler))
        assert result.text == "antwoord"
        assert result.backend_kind == "remote"

    def test_bounded_retries_with_backoff(self):
        calls = {"n": 0}

        def handler(request):
            calls["n"] += 1
            raise httpx.ConnectError("down")

        sleeps = []
        with pytest.raises(BackendUnavailable):
            complete(CompletionRequest("s", "u"), self._client(handler, sleeps))
        assert calls["n"] == 3
        assert sleeps == [1.0, 2.0, 4.0]
