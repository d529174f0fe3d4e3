// Single-case session controller: the state machine behind the screens.
// All transitions round-trip through the API; the server is the source of
// truth and stale-version conflicts trigger a reload of server state.

import {
  ApiClient,
  ApiError,
  AuditRecordView,
  CaseView,
  DiffView,
  DraftView,
  FeedbackItem,
  FinalLetter,
} from "./api.js";
import { IntakeForm, validateIntake } from "./validation.js";

export type Busy = "drafting" | "refining" | "approving" | "loading" | null;

export interface SessionError {
  code: string;
  message: string;
  retryWithEmptyRetrieval?: boolean;
}

export interface SessionState {
  screen: "intake" | "review";
  busy: Busy;
  error: SessionError | null;
  caseView: CaseView | null;
  drafts: Record<number, DraftView>;
  selectedVersion: number | null;
  diffs: Record<number, DiffView>;
  audit: AuditRecordView[] | null;
  finalLetter: FinalLetter | null;
  pendingFeedback: FeedbackItem[];
  editedSections: Record<string, string>;
}

export function initialState(): SessionState {
  return {
    screen: "intake",
    busy: null,
    error: null,
    caseView: null,
    drafts: {},
    selectedVersion: null,
    diffs: {},
    audit: null,
    finalLetter: null,
    pendingFeedback: [],
    editedSections: {},
  };
}

type Listener = (state: SessionState) => void;

export class SessionController {
  state: SessionState = initialState();
  private listeners: Listener[] = [];

  constructor(private api: ApiClient) {}

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private update(partial: Partial<SessionState>): void {
    this.state = { ...this.state, ...partial };
    for (const listener of this.listeners) listener(this.state);
  }

  get latestVersion(): number {
    return this.state.caseView?.current_version ?? 0;
  }

  get approved(): boolean {
    return this.state.caseView?.approved_version != null;
  }

  get selectedDraft(): DraftView | null {
    const v = this.state.selectedVersion;
    return v == null ? null : this.state.drafts[v] ?? null;
  }

  private fail(error: unknown): void {
    if (error instanceof ApiError) {
      this.update({
        busy: null,
        error: {
          code: error.code,
          message: error.message,
          retryWithEmptyRetrieval: error.code === "RetrievalEmpty",
        },
      });
    } else {
      this.update({ busy: null, error: { code: "Client", message: String(error) } });
    }
  }

  /** Intake screen: create the case, then generate v1 while a spinner shows. */
  async submitIntake(form: IntakeForm): Promise<void> {
    const validation = validateIntake(form);
    if (!validation.ok) {
      this.update({
        error: { code: "Validation", message: Object.values(validation.problems).join(" ") },
      });
      return;
    }
    this.update({ busy: "drafting", error: null });
    try {
      const caseView = await this.api.createCase(form.domainId, {
        case_id: form.caseId.trim(),
        objection: form.objection,
        report: form.report,
        dictum: form.dictum,
        hearing_summary: form.hearingSummary.trim() || null,
        steering_advice: form.steeringAdvice.trim() || null,
      });
      this.update({ caseView });
      const draft = await this.api.generateDraft(caseView.case_id);
      this.update({
        screen: "review",
        busy: null,
        caseView: await this.api.getCase(caseView.case_id),
        drafts: { [draft.version]: draft },
        selectedVersion: draft.version,
      });
    } catch (error) {
      this.fail(error);
    }
  }

  /** Resume an existing case (e.g. after a reload). */
  async openCase(caseId: string): Promise<void> {
    this.update({ busy: "loading", error: null });
    try {
      const caseView = await this.api.getCase(caseId);
      const drafts: Record<number, DraftView> = {};
      if (caseView.current_version > 0) {
        drafts[caseView.current_version] = await this.api.getDraft(
          caseId,
          caseView.current_version,
        );
      }
      this.update({
        screen: caseView.current_version > 0 ? "review" : "intake",
        busy: null,
        caseView,
        drafts,
        selectedVersion: caseView.current_version || null,
      });
    } catch (error) {
      this.fail(error);
    }
  }

  addFeedback(item: FeedbackItem): void {
    if (!item.instruction.trim()) return;
    this.update({ pendingFeedback: [...this.state.pendingFeedback, item] });
  }

  removeFeedback(index: number): void {
    this.update({
      pendingFeedback: this.state.pendingFeedback.filter((_, i) => i !== index),
    });
  }

  /**
   * Run one refinement pass with the composed feedback. No-op while another
   * refine is in flight; pending feedback is only cleared on success so a
   * failed call never loses the jurist's notes.
   */
  async refine(): Promise<void> {
    if (this.state.busy) return;
    if (this.state.pendingFeedback.length === 0) {
      this.update({ error: { code: "Validation", message: "Add at least one feedback item." } });
      return;
    }
    const caseId = this.state.caseView?.case_id;
    if (!caseId) return;
    this.update({ busy: "refining", error: null });
    try {
      const draft = await this.api.refine(caseId, this.latestVersion, this.state.pendingFeedback);
      const caseView = await this.api.getCase(caseId);
      const diff = await this.api.getDiff(caseId, draft.version);
      this.update({
        busy: null,
        caseView,
        drafts: { ...this.state.drafts, [draft.version]: draft },
        diffs: { ...this.state.diffs, [draft.version]: diff },
        selectedVersion: draft.version,
        pendingFeedback: [],
      });
    } catch (error) {
      if (error instanceof ApiError && error.code === "StaleVersion") {
        await this.reloadServerState();
      }
      this.fail(error);
    }
  }

  /** Explicit history navigation; otherwise the latest version stays shown. */
  async selectVersion(version: number): Promise<void> {
    const caseId = this.state.caseView?.case_id;
    if (!caseId) return;
    this.update({ busy: "loading", error: null });
    try {
      const drafts = { ...this.state.drafts };
      if (!drafts[version]) {
        drafts[version] = await this.api.getDraft(caseId, version);
      }
      const diffs = { ...this.state.diffs };
      if (version >= 2 && !diffs[version]) {
        diffs[version] = await this.api.getDiff(caseId, version);
      }
      this.update({ busy: null, drafts, diffs, selectedVersion: version });
    } catch (error) {
      this.fail(error);
    }
  }

  setSectionEdit(kind: string, text: string): void {
    this.update({ editedSections: { ...this.state.editedSections, [kind]: text } });
  }

  clearSectionEdits(): void {
    this.update({ editedSections: {} });
  }

  async approve(): Promise<void> {
    if (this.state.busy) return;
    const caseId = this.state.caseView?.case_id;
    if (!caseId) return;
    this.update({ busy: "approving", error: null });
    try {
      const edited = Object.keys(this.state.editedSections).length
        ? this.state.editedSections
        : null;
      const finalLetter = await this.api.approve(caseId, this.latestVersion, edited);
      this.update({
        busy: null,
        finalLetter,
        editedSections: {},
        caseView: await this.api.getCase(caseId),
      });
    } catch (error) {
      if (error instanceof ApiError && error.code === "StaleVersion") {
        await this.reloadServerState();
      }
      this.fail(error);
    }
  }

  async loadAudit(): Promise<void> {
    const caseId = this.state.caseView?.case_id;
    if (!caseId) return;
    try {
      const audit = await this.api.getAudit(caseId);
      this.update({ audit: audit.records });
    } catch (error) {
      this.fail(error);
    }
  }

  /** Fetch the letter document (issued text once approved). */
  async download(): Promise<string | null> {
    const caseId = this.state.caseView?.case_id;
    if (!caseId) return null;
    try {
      return await this.api.exportLetter(caseId);
    } catch (error) {
      this.fail(error);
      return null;
    }
  }

  private async reloadServerState(): Promise<void> {
    const caseId = this.state.caseView?.case_id;
    if (!caseId) return;
    try {
      const caseView = await this.api.getCase(caseId);
      const drafts = { ...this.state.drafts };
      if (caseView.current_version > 0 && !drafts[caseView.current_version]) {
        drafts[caseView.current_version] = await this.api.getDraft(
          caseId,
          caseView.current_version,
        );
      }
      this.update({ caseView, drafts, selectedVersion: caseView.current_version || null });
    } catch {
      // keep the original error; the reload is best-effort
    }
  }
}
