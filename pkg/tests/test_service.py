import json

import pytest
from fastapi.testclient import TestClient

from lexdraft import metrics
from lexdraft.cli import main as cli_main
from lexdraft.corpus import synthesize_cases
from lexdraft.service import create_app
from tests.conftest import build_domain_root


@pytest.fixture(scope="module")
def api(tmp_path_factory):
    root = tmp_path_factory.mktemp("api_root")
    build_domain_root(root, n_letters=40)
    return TestClient(create_app(root))


@pytest.fixture(scope="module")
def deid_api(tmp_path_factory):
    root = tmp_path_factory.mktemp("deid_api_root")
    build_domain_root(root, n_letters=40, deid_enabled=True)
    return TestClient(create_app(root))


def case_body(seed):
    synthetic = synthesize_cases(seed, 1, "waste")[0]
    case = synthetic.case
    body = {
        "case_id": case.case_id,
        "objection": case.objection_letter,
        "report": case.enforcement_report,
        "dictum": case.dictum.value,
    }
    if case.hearing_summary:
        body["hearing_summary"] = case.hearing_summary
    if case.steering_advice:
        body["steering_advice"] = case.steering_advice
    return synthetic, body


class TestFlow:
    def test_health(self, api):
        resp = api.get("/healthz")
        assert resp.status_code == 200
        assert resp.json()["domains"] == ["waste"]

    def test_full_flow(self, api):
        _, body = case_body(2001)
        case_id = body["case_id"]

        created = api.post("/domains/waste/cases", json=body)
        assert created.status_code == 201
        assert created.json()["status"] == "Submitted"

        draft = api.post(f"/cases/{case_id}/draft")
        assert draft.status_code == 200
        payload = draft.json()
        assert payload["version"] == 1
        assert payload["source_chunks"]
        assert all("preview" in s and "score" in s for s in payload["source_chunks"])

        refined = api.post(
            f"/cases/{case_id}/drafts/1/refine",
            json={"feedback": [{"instruction": "Benoem de evenredigheid.", "target_section": "explanation"}]},
        )
        assert refined.status_code == 200
        assert refined.json()["version"] == 2

        diff = api.get(f"/cases/{case_id}/drafts/2/diff")
        assert diff.status_code == 200
        inserted = [
            tok
            for section in diff.json()["sections"]
            for op in section["ops"]
            if op["op"] == "insert"
            for tok in op["tokens"]
        ]
        assert "evenredigheid" in inserted

        approved = api.post(f"/cases/{case_id}/drafts/2/approve", json={})
        assert approved.status_code == 200
        assert approved.json()["edit_stats"]["retention_ratio"] == 1.0

        audit = api.get(f"/cases/{case_id}/audit")
        assert [r["event"] for r in audit.json()["records"]] == [
            "Ingest",
            "Summarize",
            "Retrieve",
            "GenerateDraft",
            "Refine",
            "Approve",
            "Export",
        ]

        export = api.get(f"/cases/{case_id}/export")
        assert export.status_code == 200
        assert export.headers["content-type"].startswith("text/markdown")
        assert "## Conclusion" in export.text

    def test_case_view(self, api):
        _, body = case_body(2002)
        api.post("/domains/waste/cases", json=body)
        api.post(f"/cases/{body['case_id']}/draft")
        view = api.get(f"/cases/{body['case_id']}")
        assert view.status_code == 200
        assert view.json()["current_version"] == 1
        assert view.json()["domain_id"] == "waste"


class TestProblems:
    def test_refine_after_approve_is_409_already_approved(self, api):
        _, body = case_body(2003)
        case_id = body["case_id"]
        api.post("/domains/waste/cases", json=body)
        api.post(f"/cases/{case_id}/draft")
        api.post(f"/cases/{case_id}/drafts/1/approve", json={})
        resp = api.post(
            f"/cases/{case_id}/drafts/1/refine",
            json={"feedback": [{"instruction": "meer"}]},
        )
        assert resp.status_code == 409
        problem = resp.json()
        assert problem["code"] == "AlreadyApproved"
        assert problem["case_id"] == case_id

    def test_unknown_domain_404(self, api):
        _, body = case_body(2004)
        resp = api.post("/domains/parking/cases", json=body)
        assert resp.status_code == 404
        assert resp.json()["code"] == "UnknownDomain"

    def test_unknown_case_404(self, api):
        resp = api.get("/cases/never-existed/audit")
        assert resp.status_code == 404
        assert resp.json()["code"] == "UnknownCase"

    def test_stale_version_409(self, api):
        _, body = case_body(2005)
        case_id = body["case_id"]
        api.post("/domains/waste/cases", json=body)
        api.post(f"/cases/{case_id}/draft")
        api.post(
            f"/cases/{case_id}/drafts/1/refine",
            json={"feedback": [{"instruction": "x"}]},
        )
        resp = api.post(f"/cases/{case_id}/drafts/1/approve", json={})
        assert resp.status_code == 409
        assert resp.json()["code"] == "StaleVersion"

    def test_bad_dictum_400(self, api):
        _, body = case_body(2006)
        body["dictum"] = "misschien"
        resp = api.post("/domains/waste/cases", json=body)
        assert resp.status_code == 400
        assert resp.json()["code"] == "MalformedRecord"


class TestDeidBoundary:
    def test_responses_never_contain_originals_before_approval(self, deid_api):
        synthetic, body = case_body(2101)
        case_id = body["case_id"]
        deid_api.post("/domains/waste/cases", json=body)
        draft = deid_api.post(f"/cases/{case_id}/draft")
        name = synthetic.pii_values["Person"][0]
        assert name not in draft.text
        audit = deid_api.get(f"/cases/{case_id}/audit")
        assert name not in audit.text
        view = deid_api.get(f"/cases/{case_id}")
        assert name not in view.text
        approved = deid_api.post(f"/cases/{case_id}/drafts/1/approve", json={})
        assert name in approved.json()["text"]


class TestCli:
    def test_eval_matches_direct_metrics(self, tmp_path, capsys):
        records = [
            {"case_id": "c1", "ai_text": "a b c d", "final_text": "a x c d y"},
            {"case_id": "c2", "ai_text": "een twee", "final_text": "een twee"},
        ]
        eval_path = tmp_path / "eval.jsonl"
        eval_path.write_text("\n".join(json.dumps(r) for r in records))
        out_path = tmp_path / "report.json"
        rc = cli_main(["eval", "--set", str(eval_path), "--json", str(out_path)])
        assert rc == 0
        printed = capsys.readouterr().out
        direct = metrics.evaluate_set(records)
        assert json.loads(out_path.read_text()) == direct
        expected_pct = f"{direct['aggregate']['retention_ratio'] * 100:.1f}%"
        assert expected_pct in printed

    def test_synth_ingest_index_arithmetic(self, tmp_path, capsys):
        corpus = tmp_path / "corpus.jsonl"
        assert cli_main(["synth-corpus", "--seed", "1", "--n", "200", "--domain", "waste", "--out", str(corpus)]) == 0
        assert cli_main(["ingest", "--domain", "waste", "--corpus", str(corpus), "--root", str(tmp_path)]) == 0
        ingest_out = json.loads(capsys.readouterr().out)
        assert ingest_out["letters"] == 200
        assert ingest_out["chunks"] == 1000
        assert cli_main(["index", "--domain", "waste", "--root", str(tmp_path)]) == 0
        index_out = json.loads(capsys.readouterr().out)
        assert index_out["chunks_indexed"] == 1000

    def test_draft_twice_identical_output_files(self, tmp_path, capsys):
        corpus = tmp_path / "corpus.jsonl"
        cli_main(["synth-corpus", "--seed", "3", "--n", "40", "--domain", "waste", "--out", str(corpus)])
        case = synthesize_cases(3001, 1, "waste")[0].case
        case_path = tmp_path / "case.json"
        case_path.write_text(json.dumps(case.to_dict()))
        outputs = []
        for run in ("r1", "r2"):
            root = tmp_path / run
            root.mkdir()
            cli_main(["ingest", "--domain", "waste", "--corpus", str(corpus), "--root", str(root)])
            cli_main(["index", "--domain", "waste", "--root", str(root)])
            capsys.readouterr()
            out = root / "draft.json"
            rc = cli_main([
                "draft", "--case", str(case_path), "--domain", "waste",
                "--root", str(root), "--mock", "--out", str(out),
            ])
            assert rc == 0
            outputs.append(json.loads(out.read_text()))
        for field in ("sections", "source_chunk_ids", "prompt_digest"):
            assert outputs[0][field] == outputs[1][field]

    def test_error_exit_code(self, tmp_path, capsys):
        rc = cli_main([
            "refine", "--case-id", "missing", "--version", "1",
            "--feedback", "x", "--root", str(tmp_path),
        ])
        assert rc == 2
        err = capsys.readouterr().err
        assert "UnknownCase" in err
