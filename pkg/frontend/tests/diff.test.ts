import { describe, expect, test } from "vitest";

import type { SectionDiff } from "../src/api.js";
import { changeCounts, insertedTokens, opsToSpans, spansToTokens } from "../src/diff.js";

const SECTIONS: SectionDiff[] = [
  {
    section_kind: "explanation",
    ops: [
      { op: "equal", tokens: ["the", "fine", "stands"] },
      { op: "delete", tokens: ["probably"] },
      { op: "insert", tokens: ["after", "review"] },
      { op: "equal", tokens: ["today"] },
    ],
  },
  {
    section_kind: "conclusion",
    ops: [{ op: "insert", tokens: ["appeal", "possible"] }],
  },
];

describe("diff rendering model", () => {
  test("spans mirror the server ops one-to-one", () => {
    const spans = opsToSpans(SECTIONS[0].ops);
    expect(spans).toEqual([
      { kind: "equal", text: "the fine stands" },
      { kind: "delete", text: "probably" },
      { kind: "insert", text: "after review" },
      { kind: "equal", text: "today" },
    ]);
  });

  test("empty ops produce no spans", () => {
    expect(opsToSpans([{ op: "equal", tokens: [] }])).toEqual([]);
  });

  test("old and new token streams reconstruct from spans", () => {
    const spans = opsToSpans(SECTIONS[0].ops);
    expect(spansToTokens(spans, "old")).toEqual(["the", "fine", "stands", "probably", "today"]);
    expect(spansToTokens(spans, "new")).toEqual([
      "the",
      "fine",
      "stands",
      "after",
      "review",
      "today",
    ]);
  });

  test("inserted tokens collect across sections", () => {
    expect(insertedTokens(SECTIONS)).toEqual(["after", "review", "appeal", "possible"]);
  });

  test("change counts", () => {
    expect(changeCounts(SECTIONS)).toEqual({ inserted: 4, deleted: 1, equal: 4 });
  });
});
