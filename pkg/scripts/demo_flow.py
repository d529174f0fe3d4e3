#!/usr/bin/env python3
"""Run the whole drafting loop offline: corpus -> index -> draft -> refine -> approve.

Creates a disposable working root, builds a synthetic waste-fine domain with
mock backends, drives one case through the full workflow and prints what
happened at each step. Pass --deid to watch the redaction boundary in action.
"""

from __future__ import annotations

import argparse
import tempfile
from pathlib import Path

from lexdraft.corpus import SectionKind, generate_synthetic_corpus, ingest_corpus, synthesize_cases
from lexdraft.letters import render_letter, sections_from_lists
from lexdraft.pipeline import Registry, build_domain_index, ensure_domain_config


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--letters", type=int, default=150)
    parser.add_argument("--deid", action="store_true", help="enable de-identification")
    parser.add_argument("--root", help="working root (default: a temp dir)")
    args = parser.parse_args()

    root = Path(args.root) if args.root else Path(tempfile.mkdtemp(prefix="lexdraft-demo-"))
    print(f"working root: {root}")

    config = ensure_domain_config(root, "waste", deid_enabled=args.deid)
    summary = ingest_corpus(
        generate_synthetic_corpus(args.seed, args.letters, "waste"),
        "waste",
        root / config.chunk_store_path,
    )
    print(f"ingested {summary.letters} letters -> {summary.chunks} chunks")
    n = build_domain_index(root, config)
    print(f"indexed {n} chunks")

    runtime = Registry(root).runtime("waste")
    case = synthesize_cases(args.seed, 1, "waste")[0].case
    runtime.create_case(case)
    print(f"\ncase {case.case_id} (dictum: {case.dictum.value})")

    draft = runtime.generate_draft(case.case_id)
    print(f"\n--- draft v1 ({len(draft['source_chunk_ids'])} source chunks) ---")
    print(render_letter(sections_from_lists(draft["sections"])))

    v2 = runtime.refine_draft(
        case.case_id,
        [(SectionKind.EXPLANATION, "Address the proportionality of the fine explicitly.")],
        target_version=1,
    )
    print("--- draft v2 (after one feedback item) ---")
    print(render_letter(sections_from_lists(v2["sections"])))

    final = runtime.approve_draft(case.case_id, v2["version"], actor="user:demo")
    print("--- issued letter ---")
    print(final["text"])
    print(f"edit stats: {final['edit_stats']}")

    print("--- audit trail ---")
    for record in runtime.read_audit(case.case_id):
        print(f"  {record.seq}. {record.event} ({record.actor})")
    runtime.store.verify_chain(case.case_id)
    print("hash chain verified")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
