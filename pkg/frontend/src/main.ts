// Workbench bootstrap: wires the session controller to the two screens.

import { ApiClient, FeedbackItem } from "./api.js";
import { SessionController } from "./session.js";
import { emptyIntake, IntakeForm, validateIntake } from "./validation.js";
import {
  el,
  renderAudit,
  renderDiff,
  renderError,
  renderSections,
  renderSources,
  renderVersionPicker,
  sectionLabel,
} from "./views.js";

const api = new ApiClient("");
const controller = new SessionController(api);
const root = document.getElementById("app")!;

const form: IntakeForm = emptyIntake();
form.caseId = `case-${Date.now().toString(36)}`;
let activeTab: "draft" | "diff" | "audit" = "draft";
let editMode = false;
let domains: string[] = [];

function intakeScreen(): HTMLElement {
  const validation = validateIntake(form);
  const screen = el("div", { class: "intake" }, el("h2", {}, "New objection case"));

  const domainSelect = el("select", { id: "domain" });
  domainSelect.append(el("option", { value: "" }, "select a case type"));
  for (const d of domains) {
    const opt = el("option", { value: d }, d);
    if (form.domainId === d) opt.setAttribute("selected", "selected");
    domainSelect.append(opt);
  }
  domainSelect.addEventListener("change", () => {
    form.domainId = domainSelect.value;
    rerender();
  });

  const field = (
    label: string,
    key: keyof IntakeForm,
    kind: "input" | "textarea",
    rows = 6,
  ) => {
    const control =
      kind === "input"
        ? el("input", { value: String(form[key]) })
        : el("textarea", { rows: String(rows) });
    if (kind === "textarea") (control as HTMLTextAreaElement).value = String(form[key]);
    control.addEventListener("input", () => {
      (form[key] as string) = (control as HTMLInputElement).value;
      rerender();
    });
    const problem = validation.problems[key];
    return el(
      "label",
      { class: "field" },
      el("span", {}, label),
      control,
      el("span", { class: "field-hint" }, problem ?? ""),
    );
  };

  const dictumWrap = el("div", { class: "field" }, el("span", {}, "Intended outcome (dictum)"));
  for (const value of ["uphold", "reject"] as const) {
    const radio = el("input", { type: "radio", name: "dictum", value });
    if (form.dictum === value) radio.setAttribute("checked", "checked");
    radio.addEventListener("change", () => {
      form.dictum = value;
      rerender();
    });
    dictumWrap.append(el("label", { class: "radio" }, radio, ` ${value} the objection`));
  }
  dictumWrap.append(el("span", { class: "field-hint" }, validation.problems.dictum ?? ""));

  const submit = el("button", { class: "primary" }, "Create case and generate draft");
  if (!validation.ok || controller.state.busy) submit.setAttribute("disabled", "disabled");
  submit.addEventListener("click", () => void controller.submitIntake(form));

  screen.append(
    el("label", { class: "field" }, el("span", {}, "Case type"), domainSelect,
      el("span", { class: "field-hint" }, validation.problems.domainId ?? "")),
    field("Case id", "caseId", "input"),
    field("Objection letter", "objection", "textarea", 8),
    field("Enforcement report", "report", "textarea", 6),
    field("Hearing summary (optional)", "hearingSummary", "textarea", 3),
    field("Steering advice (optional)", "steeringAdvice", "textarea", 3),
    dictumWrap,
    renderError(controller.state.error),
    submit,
    controller.state.busy ? el("div", { class: "spinner" }, "Generating draft ...") : "",
  );
  return screen;
}

function feedbackComposer(): HTMLElement {
  const wrap = el("div", { class: "composer" }, el("h3", {}, "Feedback"));
  const list = el("ul", { class: "feedback-list" });
  controller.state.pendingFeedback.forEach((item, i) => {
    const remove = el("button", { class: "link" }, "remove");
    remove.addEventListener("click", () => controller.removeFeedback(i));
    list.append(
      el("li", {}, `[${item.target_section ?? "general"}] ${item.instruction} `, remove),
    );
  });

  const target = el("select", {});
  target.append(el("option", { value: "" }, "general"));
  const draft = controller.selectedDraft;
  for (const [kind] of draft?.sections ?? []) {
    target.append(el("option", { value: kind }, sectionLabel(kind)));
  }
  const instruction = el("input", {
    placeholder: "e.g. add the proportionality assessment",
  });
  const add = el("button", {}, "Add");
  add.addEventListener("click", () => {
    controller.addFeedback({
      instruction: instruction.value,
      target_section: target.value || null,
    } as FeedbackItem);
    instruction.value = "";
  });

  const refine = el("button", { class: "primary" }, "Refine Draft");
  const refining = controller.state.busy === "refining";
  if (refining || controller.approved || controller.state.pendingFeedback.length === 0) {
    refine.setAttribute("disabled", "disabled");
  }
  refine.addEventListener("click", () => void controller.refine());

  wrap.append(list, el("div", { class: "composer-row" }, target, instruction, add), refine,
    refining ? el("span", { class: "spinner" }, " refining ...") : "");
  return wrap;
}

function reviewScreen(): HTMLElement {
  const state = controller.state;
  const caseView = state.caseView!;
  const draft = controller.selectedDraft;
  const screen = el(
    "div",
    { class: "review" },
    el(
      "header",
      { class: "case-head" },
      el("h2", {}, `Case ${caseView.case_id}`),
      el(
        "div",
        { class: "case-meta" },
        `${caseView.domain_id} | status ${caseView.status} | ` +
          `refines ${caseView.refine_count}/${caseView.max_refine_iterations}`,
      ),
      renderVersionPicker(state, (v) => void controller.selectVersion(v)),
    ),
    renderError(state.error),
  );

  const tabs = el("nav", { class: "tabs" });
  for (const tab of ["draft", "diff", "audit"] as const) {
    const button = el("button", { class: tab === activeTab ? "tab selected" : "tab" }, tab);
    button.addEventListener("click", () => {
      activeTab = tab;
      if (tab === "audit") void controller.loadAudit();
      rerender();
    });
    tabs.append(button);
  }
  screen.append(tabs);

  if (activeTab === "draft" && draft) {
    const main = el("div", { class: "split" });
    main.append(
      renderSections(draft, state.editedSections, editMode && !controller.approved, (kind, text) =>
        controller.setSectionEdit(kind, text),
      ),
      el(
        "aside",
        {},
        renderSources(draft.source_chunks),
        feedbackComposer(),
      ),
    );
    screen.append(main);

    const actions = el("div", { class: "actions" });
    const editToggle = el("button", {}, editMode ? "Discard edits" : "Edit before approval");
    editToggle.addEventListener("click", () => {
      editMode = !editMode;
      if (!editMode) controller.clearSectionEdits();
      rerender();
    });
    const approve = el("button", { class: "primary" }, "Approve");
    if (controller.approved || state.busy) approve.setAttribute("disabled", "disabled");
    approve.addEventListener("click", () => void controller.approve());
    const download = el("button", {}, "Download letter");
    if (!controller.approved && !draft) download.setAttribute("disabled", "disabled");
    download.addEventListener("click", () => {
      void controller.download().then((text) => {
        if (text == null) return;
        const blob = new Blob([text], { type: "text/markdown" });
        const link = el("a", {
          href: URL.createObjectURL(blob),
          download: `${caseView.case_id}.md`,
        });
        link.click();
      });
    });
    actions.append(editToggle, approve, download);
    if (state.finalLetter) {
      actions.append(
        el(
          "div",
          { class: "edit-stats" },
          `Approved. Kept ${(state.finalLetter.edit_stats.retention_ratio * 100).toFixed(1)}% ` +
            `of the draft verbatim; ${state.finalLetter.edit_stats.added} tokens added.`,
        ),
      );
    }
    screen.append(actions);
  } else if (activeTab === "diff") {
    const version = state.selectedVersion ?? 0;
    const diff = state.diffs[version];
    screen.append(
      diff
        ? renderDiff(diff)
        : el("p", { class: "hint" }, "Select a version 2 or later to see its changes."),
    );
  } else if (activeTab === "audit") {
    screen.append(state.audit ? renderAudit(state.audit) : el("p", {}, "Loading audit trail..."));
  }
  return screen;
}

function rerender(): void {
  root.replaceChildren(
    controller.state.screen === "intake" ? intakeScreen() : reviewScreen(),
  );
}

controller.subscribe(() => rerender());

void api.health().then((health) => {
  domains = health.domains;
  if (domains.length === 1) form.domainId = domains[0];
  rerender();
});

rerender();
