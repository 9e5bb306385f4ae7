/** Wire types mirroring the service's JSON payloads. */

export interface RecommendationView {
  step_id: string;
  kind: string;
  name: string;
  explanation: string;
  outcomes: string[];
  cost: number;
  ecr: number;
  success_probability: number | null;
  answer_distribution: Record<string, number> | null;
  rationale: Record<string, number>;
}

export interface TerminalView {
  status: "resolved" | "unresolved";
  resolved_by: string | null;
}

export interface EvidenceView {
  step_id: string;
  outcome: string;
  origin: string;
}

export interface HistoryItemView {
  step_id: string;
  outcome: string;
  at: string;
}

export interface SessionState {
  session_id: string;
  seq: number;
  model_id: string;
  profile: string;
  status: string;
  resolved_by: string | null;
  posterior: Record<string, number>;
  recommendation: RecommendationView | null;
  terminal: TerminalView | null;
  evidence: EvidenceView[];
  history: HistoryItemView[];
}

export interface ModelSummary {
  id: string;
  name: string;
}

export interface QuestionDoc {
  id: string;
  name: string;
  kind: string;
  answers: string[];
  cause_rows?: Record<string, Record<string, number>>;
  answer_priors?: Record<string, number>;
  none_row?: Record<string, number>;
}

export interface ModelDoc {
  id: string;
  name: string;
  questions: QuestionDoc[];
}

export interface ChangedCell {
  cause: string;
  answer: string;
  old: number;
  value: number;
}

export interface SliderResponse {
  changed_cells: ChangedCell[];
  table: Record<string, Record<string, number>>;
}

export interface WishOutcomeView {
  cause_id: string;
  answer: string;
  requested_level: number;
  final_level: number;
  status: "satisfied" | "partially-satisfied" | "dropped";
  note: string;
}

export interface FitResponse {
  table: Record<string, Record<string, number>>;
  answer_priors: Record<string, number>;
  fit_report: {
    wishes: WishOutcomeView[];
    residuals: Record<string, number>;
    column_sums: Record<string, number>;
    rescaled_answers: string[];
  };
}

export interface WishInput {
  cause_id: string;
  answer: string;
  level: number;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}
