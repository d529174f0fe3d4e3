// Client-side intake validation mirroring the server's preconditions, so
// the submit button can stay disabled with an explanatory hint instead of
// bouncing off a 400.

export interface IntakeForm {
  domainId: string;
  caseId: string;
  objection: string;
  report: string;
  dictum: "" | "uphold" | "reject";
  hearingSummary: string;
  steeringAdvice: string;
}

export interface ValidationResult {
  ok: boolean;
  problems: Partial<Record<keyof IntakeForm, string>>;
}

const CASE_ID_SHAPE = /^[A-Za-z0-9][A-Za-z0-9._-]{0,79}$/;

export function emptyIntake(): IntakeForm {
  return {
    domainId: "",
    caseId: "",
    objection: "",
    report: "",
    dictum: "",
    hearingSummary: "",
    steeringAdvice: "",
  };
}

export function validateIntake(form: IntakeForm): ValidationResult {
  const problems: ValidationResult["problems"] = {};
  if (!form.domainId) {
    problems.domainId = "Select a case type.";
  }
  if (!form.caseId.trim()) {
    problems.caseId = "A case id is required.";
  } else if (!CASE_ID_SHAPE.test(form.caseId.trim())) {
    problems.caseId = "Use letters, digits, dots, dashes (max 80 chars).";
  }
  if (!form.objection.trim()) {
    problems.objection = "Paste the citizen's objection letter.";
  }
  if (!form.report.trim()) {
    problems.report = "Paste the enforcement report.";
  }
  if (form.dictum !== "uphold" && form.dictum !== "reject") {
    problems.dictum = "Set the intended outcome (uphold or reject) before drafting.";
  }
  return { ok: Object.keys(problems).length === 0, problems };
}
