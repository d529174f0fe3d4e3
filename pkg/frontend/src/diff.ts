// Rendering model for version diffs. The token operations come from the
// server's LCS diff endpoint; this module only reshapes them for display
// and never computes a diff of its own, so highlights always equal the
// server's token_diff spans.

import type { DiffOp, SectionDiff } from "./api.js";

export interface HighlightSpan {
  kind: "equal" | "insert" | "delete";
  text: string;
}

export function opsToSpans(ops: DiffOp[]): HighlightSpan[] {
  return ops
    .filter((op) => op.tokens.length > 0)
    .map((op) => ({ kind: op.op, text: op.tokens.join(" ") }));
}

export function spansToTokens(spans: HighlightSpan[], side: "old" | "new"): string[] {
  const keep = side === "old" ? ["equal", "delete"] : ["equal", "insert"];
  return spans
    .filter((span) => keep.includes(span.kind))
    .flatMap((span) => span.text.split(" "))
    .filter((token) => token.length > 0);
}

export function insertedTokens(sections: SectionDiff[]): string[] {
  return sections.flatMap((section) =>
    section.ops.filter((op) => op.op === "insert").flatMap((op) => op.tokens),
  );
}

export function changeCounts(sections: SectionDiff[]): {
  inserted: number;
  deleted: number;
  equal: number;
} {
  let inserted = 0;
  let deleted = 0;
  let equal = 0;
  for (const section of sections) {
    for (const op of section.ops) {
      if (op.op === "insert") inserted += op.tokens.length;
      else if (op.op === "delete") deleted += op.tokens.length;
      else equal += op.tokens.length;
    }
  }
  return { inserted, deleted, equal };
}
