"""Command-line interface: batch counterpart of the web flow.

Every command wraps one module operation and exits 0 on success, nonzero
with a diagnostic on stderr otherwise. The working root (configs, stores,
indexes, case logs) comes from --root or LEXDRAFT_ROOT.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import metrics
from .corpus import (
    CaseFile,
    SectionKind,
    generate_synthetic_corpus,
    ingest_corpus,
    read_corpus_jsonl,
    write_corpus_jsonl,
)
from .errors import LexdraftError
from .pipeline import Registry, build_domain_index, ensure_domain_config


def _root(args) -> Path:
    root = args.root or os.environ.get("LEXDRAFT_ROOT") or "."
    return Path(root)


def _print(obj) -> None:
    print(json.dumps(obj, ensure_ascii=False, indent=2))


def cmd_synth_corpus(args) -> int:
    records = generate_synthetic_corpus(args.seed, args.n, args.domain)
    n = write_corpus_jsonl(records, args.out)
    print(f"wrote {n} letters to {args.out}", file=sys.stderr)
    return 0


def cmd_ingest(args) -> int:
    root = _root(args)
    config = ensure_domain_config(root, args.domain)
    summary = ingest_corpus(
        read_corpus_jsonl(args.corpus), args.domain, root / config.chunk_store_path
    )
    _print(summary.to_dict())
    return 0 if not summary.errors or args.allow_errors else 1


def cmd_index(args) -> int:
    root = _root(args)
    config = ensure_domain_config(root, args.domain)
    n = build_domain_index(root, config)
    _print({"domain_id": args.domain, "chunks_indexed": n})
    return 0


def _force_mock(runtime) -> None:
    from .embedding import MockHashEmbedder
    from .llm import MockTemplateClient

    if runtime.config.llm.get("kind") != "mock-template":
        runtime.llm = MockTemplateClient()
    if runtime.config.embedder.get("kind") != "mock-hash":
        runtime.embedder = MockHashEmbedder(seed=0)


def cmd_draft(args) -> int:
    root = _root(args)
    registry = Registry(root)
    runtime = registry.runtime(args.domain)
    if args.mock:
        _force_mock(runtime)
    case = CaseFile.from_dict(json.loads(Path(args.case).read_text(encoding="utf-8")))
    runtime.create_case(case)
    draft = runtime.generate_draft(case.case_id)
    if args.out:
        Path(args.out).write_text(
            json.dumps(draft, ensure_ascii=False, indent=2), encoding="utf-8"
        )
        print(f"draft v{draft['version']} written to {args.out}", file=sys.stderr)
    else:
        _print(draft)
    return 0


def _parse_feedback(raw: list[str]) -> list[tuple[SectionKind | None, str]]:
    out = []
    for item in raw:
        target = None
        text = item
        if ":" in item:
            head, rest = item.split(":", 1)
            try:
                target = SectionKind(head.strip().lower().replace(" ", "_"))
                text = rest
            except ValueError:
                pass
        out.append((target, text.strip()))
    return out


def cmd_refine(args) -> int:
    registry = Registry(_root(args))
    runtime = registry.runtime_for_case(args.case_id)
    if args.mock:
        _force_mock(runtime)
    draft = runtime.refine_draft(
        args.case_id,
        _parse_feedback(args.feedback),
        target_version=args.version,
        actor=args.actor,
    )
    _print(draft)
    return 0


def cmd_approve(args) -> int:
    registry = Registry(_root(args))
    runtime = registry.runtime_for_case(args.case_id)
    edits = None
    if args.edit:
        edits = {}
        for item in args.edit:
            head, rest = item.split(":", 1)
            edits[head.strip().lower().replace(" ", "_")] = rest.strip()
    final = runtime.approve_draft(
        args.case_id, args.version, edited_sections=edits, actor=args.actor
    )
    if args.out:
        Path(args.out).write_text(final["text"], encoding="utf-8")
        print(f"final letter written to {args.out}", file=sys.stderr)
    else:
        _print(final)
    return 0


def cmd_eval(args) -> int:
    report = metrics.evaluate_set(metrics.load_eval_set(args.set))
    if args.json:
        metrics.write_report(report, args.json)
    print(metrics.format_report_table(report["aggregate"]))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(_root(args), ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lexdraft")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-corpus", help="generate a seeded synthetic letter corpus")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--domain", default="waste")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_corpus)

    p = sub.add_parser("ingest", help="parse and chunk a corpus into the domain store")
    p.add_argument("--domain", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--root")
    p.add_argument("--allow-errors", action="store_true")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("index", help="embed the chunk store and build the vector index")
    p.add_argument("--domain", required=True)
    p.add_argument("--root")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("draft", help="submit a case file and generate draft v1")
    p.add_argument("--case", required=True, help="path to a case JSON file")
    p.add_argument("--domain", required=True)
    p.add_argument("--root")
    p.add_argument("--mock", action="store_true", help="force mock backends")
    p.add_argument("--out")
    p.set_defaults(func=cmd_draft)

    p = sub.add_parser("refine", help="apply feedback to the latest draft")
    p.add_argument("--case-id", required=True)
    p.add_argument("--version", type=int, required=True)
    p.add_argument(
        "--feedback",
        action="append",
        required=True,
        help="'instruction' or 'section: instruction' (repeatable)",
    )
    p.add_argument("--actor", default="user:cli")
    p.add_argument("--root")
    p.add_argument("--mock", action="store_true")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("approve", help="approve the latest draft, with optional edits")
    p.add_argument("--case-id", required=True)
    p.add_argument("--version", type=int, required=True)
    p.add_argument("--edit", action="append", help="'section: new text' (repeatable)")
    p.add_argument("--actor", default="user:cli")
    p.add_argument("--root")
    p.add_argument("--out")
    p.set_defaults(func=cmd_approve)

    p = sub.add_parser("eval", help="run the metrics harness over an evaluation set")
    p.add_argument("--set", required=True, help="JSONL of case pairs")
    p.add_argument("--json", help="also write the full report to this path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP API")
    p.add_argument("--root")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--ui", help="static directory with the workbench build")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except LexdraftError as exc:
        print(
            json.dumps({"code": exc.code, "message": str(exc)}, ensure_ascii=False),
            file=sys.stderr,
        )
        return 2
    except FileNotFoundError as exc:
        print(f"file not found: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
