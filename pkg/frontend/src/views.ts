// DOM rendering. Everything shown here is fetched server state; the only
// client-side knowledge is how to lay it out.

import type { AuditRecordView, DiffView, DraftView, SourcePreview } from "./api.js";
import { opsToSpans } from "./diff.js";
import type { SessionError, SessionState } from "./session.js";

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  node.append(...children);
  return node;
}

export function sectionLabel(kind: string): string {
  return kind
    .split("_")
    .map((w) => w.charAt(0).toUpperCase() + w.slice(1))
    .join(" ");
}

export function renderError(error: SessionError | null): HTMLElement {
  if (!error) return el("div", { class: "error hidden" });
  const box = el(
    "div",
    { class: "error" },
    el("strong", {}, error.code),
    ` ${error.message}`,
  );
  if (error.retryWithEmptyRetrieval) {
    box.append(
      el(
        "p",
        { class: "hint" },
        "No similar past cases were found. An operator can enable " +
          "allow_empty_retrieval for this domain to draft from the case " +
          "documents alone, or you can broaden the objection text.",
      ),
    );
  }
  return box;
}

export function renderSections(
  draft: DraftView,
  edits: Record<string, string>,
  editable: boolean,
  onEdit: (kind: string, text: string) => void,
): HTMLElement {
  const wrap = el("div", { class: "sections" });
  for (const [kind, text] of draft.sections) {
    const body = edits[kind] ?? text;
    const block = el("section", { class: "letter-section" }, el("h3", {}, sectionLabel(kind)));
    if (editable) {
      const area = el("textarea", { rows: "6", "data-kind": kind });
      area.value = body;
      area.addEventListener("input", () => onEdit(kind, area.value));
      block.append(area);
    } else {
      block.append(el("p", {}, body));
    }
    wrap.append(block);
  }
  return wrap;
}

export function renderSources(sources: SourcePreview[]): HTMLElement {
  const wrap = el("div", { class: "sources" }, el("h3", {}, `Sources (${sources.length})`));
  for (const source of sources) {
    wrap.append(
      el(
        "div",
        { class: "source" },
        el("div", { class: "source-head" }, `${source.chunk_id}`),
        el(
          "div",
          { class: "source-meta" },
          `case ${source.case_id} | ${source.section_kind} | score ${source.score.toFixed(4)}`,
        ),
        el("div", { class: "source-preview" }, source.preview),
      ),
    );
  }
  return wrap;
}

export function renderDiff(diff: DiffView): HTMLElement {
  const wrap = el(
    "div",
    { class: "diff" },
    el("h3", {}, `Changes v${diff.from_version} to v${diff.to_version}`),
  );
  for (const section of diff.sections) {
    const body = el("p", { class: "diff-body" });
    for (const span of opsToSpans(section.ops)) {
      body.append(el("span", { class: `tok-${span.kind}` }, span.text + " "));
    }
    wrap.append(
      el(
        "section",
        { class: "diff-section" },
        el("h4", {}, sectionLabel(section.section_kind)),
        body,
      ),
    );
  }
  return wrap;
}

export function renderAudit(records: AuditRecordView[]): HTMLElement {
  const wrap = el("div", { class: "audit" }, el("h3", {}, "Audit trail"));
  const list = el("ol", { class: "audit-list" });
  for (const record of records) {
    const line = `${record.event} (${record.actor}) ${new Date(record.ts).toLocaleString()}`;
    const item = el("li", {}, line);
    if (record.edit_stats) {
      item.append(
        el(
          "span",
          { class: "audit-stats" },
          ` kept ${(record.edit_stats.retention_ratio * 100).toFixed(0)}%, ` +
            `added ${record.edit_stats.added} tokens`,
        ),
      );
    }
    list.append(item);
  }
  wrap.append(list);
  return wrap;
}

export function renderVersionPicker(
  state: SessionState,
  onSelect: (version: number) => void,
): HTMLElement {
  const picker = el("div", { class: "versions" });
  const versions = state.caseView?.drafts ?? [];
  for (const draft of versions) {
    const isSelected = state.selectedVersion === draft.version;
    const isApproved = state.caseView?.approved_version === draft.version;
    const label = `v${draft.version}${isApproved ? " (approved)" : ""}`;
    const button = el(
      "button",
      { class: isSelected ? "version selected" : "version" },
      label,
    );
    button.addEventListener("click", () => onSelect(draft.version));
    picker.append(button);
  }
  return picker;
}
