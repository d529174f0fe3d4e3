// Typed client over the drafting API. The workbench performs no drafting
// logic of its own: every state transition and every displayed fact round-
// trips through these endpoints.

export type SectionPair = [string, string]; // [section_kind, text]

export interface SourcePreview {
  chunk_id: string;
  case_id: string;
  section_kind: string;
  score: number;
  preview: string;
}

export interface DraftView {
  draft_id: string;
  case_id: string;
  version: number;
  status: string;
  sections: SectionPair[];
  source_chunk_ids: string[];
  prompt_digest: string;
  created_at: string | null;
  source_chunks: SourcePreview[];
  truncation_report: [string, string][];
}

export interface DraftSummary {
  version: number;
  status: string;
  draft_id: string;
}

export interface CaseView {
  case_id: string;
  domain_id: string;
  status: string;
  current_version: number;
  approved_version: number | null;
  deid_enabled: boolean;
  refine_count: number;
  max_refine_iterations: number;
  case: Record<string, unknown>;
  drafts: DraftSummary[];
}

export interface EditStats {
  kept: number;
  added: number;
  removed: number;
  retention_ratio: number;
  added_content_ratio: number;
}

export interface FinalLetter {
  case_id: string;
  version: number;
  sections: SectionPair[];
  text: string;
  edit_stats: EditStats;
}

export interface DiffOp {
  op: "equal" | "insert" | "delete";
  tokens: string[];
}

export interface SectionDiff {
  section_kind: string;
  ops: DiffOp[];
}

export interface DiffView {
  case_id: string;
  from_version: number;
  to_version: number;
  sections: SectionDiff[];
}

export interface AuditRecordView {
  seq: number;
  event: string;
  case_id: string;
  ts: string;
  actor: string;
  digests: Record<string, string>;
  source_chunk_ids: string[];
  params: Record<string, unknown>;
  edit_stats: EditStats | null;
  prev_hash: string;
  hash: string;
}

export interface FeedbackItem {
  instruction: string;
  target_section: string | null;
}

export interface IntakePayload {
  case_id: string;
  objection: string;
  report: string;
  dictum: string;
  hearing_summary?: string | null;
  steering_advice?: string | null;
}

export class ApiError extends Error {
  constructor(
    public code: string,
    message: string,
    public status: number,
    public caseId: string | null = null,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path, {
      method,
      headers: body === undefined ? {} : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!resp.ok) {
      let code = `HTTP_${resp.status}`;
      let message = resp.statusText;
      let caseId: string | null = null;
      try {
        const problem = await resp.json();
        if (problem && typeof problem.code === "string") {
          code = problem.code;
          message = problem.message ?? message;
          caseId = problem.case_id ?? null;
        }
      } catch {
        // non-JSON problem body; keep the HTTP status code
      }
      throw new ApiError(code, message, resp.status, caseId);
    }
    return (await resp.json()) as T;
  }

  health(): Promise<{ status: string; domains: string[] }> {
    return this.request("GET", "/healthz");
  }

  createCase(domainId: string, intake: IntakePayload): Promise<CaseView> {
    return this.request("POST", `/domains/${encodeURIComponent(domainId)}/cases`, intake);
  }

  getCase(caseId: string): Promise<CaseView> {
    return this.request("GET", `/cases/${encodeURIComponent(caseId)}`);
  }

  generateDraft(caseId: string): Promise<DraftView> {
    return this.request("POST", `/cases/${encodeURIComponent(caseId)}/draft`);
  }

  getDraft(caseId: string, version: number): Promise<DraftView> {
    return this.request("GET", `/cases/${encodeURIComponent(caseId)}/drafts/${version}`);
  }

  refine(
    caseId: string,
    version: number,
    feedback: FeedbackItem[],
    actor = "user:web",
  ): Promise<DraftView> {
    return this.request("POST", `/cases/${encodeURIComponent(caseId)}/drafts/${version}/refine`, {
      feedback,
      actor,
    });
  }

  approve(
    caseId: string,
    version: number,
    editedSections: Record<string, string> | null = null,
    actor = "user:web",
  ): Promise<FinalLetter> {
    return this.request("POST", `/cases/${encodeURIComponent(caseId)}/drafts/${version}/approve`, {
      edited_sections: editedSections,
      actor,
    });
  }

  getDiff(caseId: string, version: number): Promise<DiffView> {
    return this.request("GET", `/cases/${encodeURIComponent(caseId)}/drafts/${version}/diff`);
  }

  getAudit(caseId: string): Promise<{ case_id: string; records: AuditRecordView[] }> {
    return this.request("GET", `/cases/${encodeURIComponent(caseId)}/audit`);
  }

  async exportLetter(caseId: string): Promise<string> {
    const resp = await this.fetchFn(
      `${this.baseUrl}/cases/${encodeURIComponent(caseId)}/export`,
      { method: "GET" },
    );
    if (!resp.ok) {
      const problem = await resp.json().catch(() => ({}));
      throw new ApiError(problem.code ?? `HTTP_${resp.status}`, problem.message ?? "", resp.status);
    }
    return resp.text();
  }
}
