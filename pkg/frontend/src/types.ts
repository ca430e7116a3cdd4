// Wire types for the labeling API. Shapes mirror docs/schemas/*.schema.json
// in the parent package; keep the two in sync when either changes.

export type Bucket = "likely_fp" | "likely_fn";

export type LabelValue = "match" | "non_match";

export type SessionState = "awaiting-labels" | "training" | "idle" | "finished";

export interface PairPayload {
  pair_id: string;
  left: Record<string, string>;
  right: Record<string, string>;
  probability: number;
  bucket: Bucket;
  label: LabelValue | null;
}

export interface BatchResponse {
  iteration: number;
  pairs: PairPayload[];
}

export interface LabelEntry {
  pair_id: string;
  label: LabelValue;
}

export interface LabelsResponse {
  accepted: number;
  remaining: number;
}

export interface AdvanceResponse {
  state: SessionState;
  iteration: number;
}

export interface StatusResponse {
  session_id: string;
  dataset: string;
  state: SessionState;
  iteration: number;
  iterations_total: number;
  pending: number;
  remaining: number;
  submitted: number;
  pool_size: number;
  labeled_size: number;
  error: string | null;
}

export interface IterationRow {
  iteration: number;
  human_labels: number;
  proxy_labels: number;
  fp: number | null;
  tp: number | null;
  fn: number | null;
  tn: number | null;
  f1_on_labeled: number;
  pool_size: number;
  labeled_size: number;
  f1_trajectory: number[];
  shortfalls: Record<string, number>;
  test_f1: number | null;
}

export interface MetricsResponse {
  history: IterationRow[];
}
