import random
from functools import lru_cache

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lexdraft.errors import EmptyReference
from lexdraft.metrics import (
    coverage_scores,
    evaluate_pair,
    evaluate_set,
    f1_score,
    format_report_table,
    key_fact_check,
    lcs_opcodes,
    length_comparison,
    retention_ratio,
    token_diff,
)
from lexdraft.textutil import normalize_tokens


def oracle_lcs(a: tuple, b: tuple) -> int:
    """Independent recursive-memoized LCS, nothing shared with the module."""

    @lru_cache(maxsize=None)
    def rec(i: int, j: int) -> int:
        if i == 0 or j == 0:
            return 0
        if a[i - 1] == b[j - 1]:
            return rec(i - 1, j - 1) + 1
        return max(rec(i - 1, j), rec(i, j - 1))

    return rec(len(a), len(b))


class TestTokenDiff:
    def test_identity(self):
        diff = token_diff("alpha beta gamma", "alpha beta gamma")
        assert (diff.kept, diff.added, diff.removed) == (3, 0, 0)

    def test_final_empty(self):
        diff = token_diff("alpha beta", "")
        assert (diff.kept, diff.added, diff.removed) == (0, 0, 2)

    def test_hand_computed_example(self):
        # LCS of (a b c d) and (a x c d y) is (a c d).
        diff = token_diff("a b c d", "a x c d y")
        assert (diff.kept, diff.added, diff.removed) == (3, 2, 1)

    def test_matches_oracle_on_random_pairs(self):
        rng = random.Random(13)
        vocab = [f"w{i}" for i in range(12)]
        for _ in range(200):
            a = [rng.choice(vocab) for _ in range(rng.randrange(0, 60))]
            b = [rng.choice(vocab) for _ in range(rng.randrange(0, 60))]
            diff = token_diff(" ".join(a), " ".join(b))
            expected = oracle_lcs(tuple(a), tuple(b))
            assert diff.kept == expected
            assert diff.kept + diff.removed == len(a)
            assert diff.kept + diff.added == len(b)

    @given(
        a=st.lists(st.sampled_from("abcdef"), max_size=30),
        b=st.lists(st.sampled_from("abcdef"), max_size=30),
    )
    @settings(max_examples=150, deadline=None)
    def test_symmetry_property(self, a, b):
        x, y = " ".join(a), " ".join(b)
        fwd = token_diff(x, y)
        rev = token_diff(y, x)
        assert fwd.kept == rev.kept
        assert fwd.added == rev.removed
        assert fwd.removed == rev.added

    def test_case_and_whitespace_invariance(self):
        assert token_diff("  Alpha  BETA ", "alpha beta") == token_diff(
            "alpha beta", "alpha beta"
        )


class TestRetention:
    def test_identical_is_one(self):
        assert retention_ratio("een twee drie", "een twee drie") == 1.0

    def test_hand_example(self):
        assert retention_ratio("a b c d", "a x c d y") == pytest.approx(0.75)

    def test_empty_ai_is_zero(self):
        assert retention_ratio("", "anything") == 0.0

    @given(
        a=st.lists(st.sampled_from("abcd"), max_size=25),
        b=st.lists(st.sampled_from("abcd"), max_size=25),
    )
    @settings(max_examples=100, deadline=None)
    def test_bounded(self, a, b):
        r = retention_ratio(" ".join(a), " ".join(b))
        assert 0.0 <= r <= 1.0


class TestOpcodes:
    def test_reconstructs_both_sequences(self):
        a = normalize_tokens("the fine was issued on monday near the market")
        b = normalize_tokens("the fine was revoked on monday at the market square")
        ops = lcs_opcodes(a, b)
        from_a = [t for op, toks in ops for t in toks if op in ("equal", "delete")]
        from_b = [t for op, toks in ops for t in toks if op in ("equal", "insert")]
        assert from_a == a
        assert from_b == b
        kept = sum(len(toks) for op, toks in ops if op == "equal")
        assert kept == token_diff(" ".join(a), " ".join(b)).kept


class TestF1:
    def test_table_consistency(self):
        # Precision 0.91 with recall 0.93 must give an F1 that rounds to 92%.
        assert f1_score(0.91, 0.93) == pytest.approx(0.92, abs=0.005)

    def test_zero_when_both_zero(self):
        assert f1_score(0.0, 0.0) == 0.0

    @given(
        p=st.floats(min_value=0, max_value=1),
        r=st.floats(min_value=0, max_value=1),
    )
    @settings(max_examples=100, deadline=None)
    def test_formula_exact(self, p, r):
        f1 = f1_score(p, r)
        if p + r > 0:
            assert abs(f1 - 2 * p * r / (p + r)) < 1e-9
        else:
            assert f1 == 0.0


class TestCoverage:
    def test_all_items_verbatim_recall_one(self):
        draft = "The fine concerns waste. The signage was checked. Proportionality was weighed."
        items = ["signage was checked", "proportionality was weighed"]
        scores = coverage_scores(draft, items)
        assert scores.recall == 1.0

    def test_zero_matches_zero_precision_and_f1(self):
        scores = coverage_scores("volledig ander onderwerp", ["iets over boten"])
        assert scores.precision == 0.0
        assert scores.f1 == 0.0

    def test_empty_reference_rejected(self):
        with pytest.raises(EmptyReference):
            coverage_scores("draft", [])

    def test_partial(self):
        draft = "First point made. Unrelated filler sentence."
        scores = coverage_scores(draft, ["first point made", "missing item"])
        assert scores.recall == pytest.approx(0.5)
        assert scores.precision == pytest.approx(0.5)

    def test_normalization(self):
        scores = coverage_scores("De BOETE is terecht.", ["de boete is terecht"])
        assert scores.recall == 1.0


class TestKeyFacts:
    def test_surface_form_union(self):
        draft = "De overtreding vond plaats op 12 maart 2024 bij de markt."
        hits = key_fact_check(
            draft, [("offense_date", ["12-03-2024", "12 maart 2024"])]
        )
        assert hits[0].present

    def test_empty_draft(self):
        hits = key_fact_check("", [("a", ["x"]), ("b", ["y"])])
        assert all(not h.present for h in hits)

    def test_fact_without_surface_forms_rejected(self):
        with pytest.raises(EmptyReference):
            key_fact_check("draft", [("a", [])])


class TestLength:
    def test_equal_lengths(self):
        assert length_comparison("a b c", "x y z") == 0.0

    def test_ai_41_percent_longer(self):
        ai = " ".join(f"t{i}" for i in range(141))
        human = " ".join(f"t{i}" for i in range(100))
        assert length_comparison(ai, human) == pytest.approx(0.41)

    def test_human_longer_negative(self):
        ai = " ".join(f"t{i}" for i in range(88))
        human = " ".join(f"t{i}" for i in range(100))
        assert length_comparison(ai, human) == pytest.approx(-0.12)

    def test_empty_human_rejected(self):
        with pytest.raises(EmptyReference):
            length_comparison("iets", "")


class TestHarness:
    def test_evaluate_pair_fields(self):
        report = evaluate_pair(
            "De boete blijft staan wegens het rapport.",
            "De boete blijft staan wegens het rapport en de foto.",
            reference_items=["de boete blijft staan"],
            key_facts=[("x", ["rapport"])],
        )
        assert 0 < report.retention_ratio <= 1
        assert report.added == 3
        assert report.recall == 1.0
        assert report.key_fact_hits[0].present
        if report.precision is not None and report.precision + report.recall > 0:
            assert report.f1 == pytest.approx(
                2 * report.precision * report.recall / (report.precision + report.recall),
                abs=1e-9,
            )

    def test_evaluate_set_and_table(self):
        records = [
            {
                "case_id": "c1",
                "ai_text": "een twee drie vier",
                "final_text": "een twee drie vier",
            },
            {
                "case_id": "c2",
                "ai_text": "a b c d",
                "final_text": "a x c d y",
                "reference_items": ["a b"],
                "key_facts": [{"fact_id": "f1", "surface_forms": ["c d"]}],
            },
        ]
        report = evaluate_set(records)
        agg = report["aggregate"]
        assert agg["cases"] == 2
        assert agg["retention_ratio"] == pytest.approx((1.0 + 0.75) / 2)
        assert agg["key_fact_retention"] == 1.0
        table = format_report_table(agg)
        assert "Retention ratio" in table
        assert "87.5%" in table
