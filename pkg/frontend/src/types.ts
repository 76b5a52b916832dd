/** Mirrors of the review-service JSON payloads. Purely client-side state:
 * every view is rebuilt from these on each fetch. */

export type QueueName = "verification" | "jury" | "preference";

export type ItemStatus = "open" | "claimed" | "done";

export interface QueueItem<P> {
  item_id: string;
  kind: QueueName;
  status: ItemStatus;
  payload: P;
  created_at: number;
  claimed_by?: string;
  lease_expires_at?: number;
}

export interface ModelResponse {
  model_label: string;
  text: string;
  generation_params?: Record<string, number> | null;
}

export interface EvalCase {
  case_id: string;
  question: string;
  responses: ModelResponse[];
  reference_answer: string;
}

export interface Evaluation {
  steps: string[];
  scores: Record<string, number>;
  raw_text: string;
}

export interface VerificationPayload {
  record_id?: string;
  case: EvalCase;
  evaluation: Evaluation;
}

export interface JuryMessage {
  role: "suggester" | "judge";
  text: string;
}

export interface JuryPayload {
  ticket_id: string;
  record_id: string;
  transcript: JuryMessage[];
  status: "open" | "decided";
  verdict: JuryVerdictOut | null;
}

export interface JuryVerdictOut {
  accept: boolean;
  text: string | null;
  juror_id: string;
  note: string | null;
}

/** Blinded pair: the service never includes source labels before close. */
export interface PreferencePayload {
  text_a: string;
  text_b: string;
}

export interface Progress {
  done: number;
  total: number;
}

export interface PendingResponse<P> {
  items: QueueItem<P>[];
  /** verification queue only: criterion name -> guideline text */
  guidelines?: Record<string, string>;
  /** preference queue only */
  criteria?: string[];
  progress?: Progress;
}

export interface ClaimResponse {
  item_id: string;
  reviewer: string;
  lease_expires_at: number;
}

export interface VerificationStateOut {
  status: "Approved" | "Rejected" | string;
  criteria: Record<string, boolean> | null;
  reviewer_id: string | null;
  note: string | null;
}

export interface DecisionResponse {
  item_id: string;
  verification: VerificationStateOut;
}

export interface VerdictResponse {
  ticket: JuryPayload;
}

export interface ChoiceResponse {
  item_id: string;
  done: number;
  total: number;
}

export interface SourceTally {
  counts: Record<string, number>;
  fractions: Record<string, number>;
  n: number;
}

export interface PreferenceResults {
  per_reviewer: Record<string, SourceTally>;
  pooled: SourceTally;
  items: Array<Record<string, unknown>>;
}

export interface QueueCounts {
  open: number;
  claimed: number;
  done: number;
  total: number;
}

export interface Stats {
  queues: Record<QueueName, QueueCounts>;
  preference_closed: boolean;
  verification: {
    decided: number;
    approved: number;
    rejected: number;
    criterion_pass_counts: number[];
    criterion_proportions: number[];
  } | null;
}
