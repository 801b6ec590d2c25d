/** Payload shapes of the driftwatch HTTP JSON API. */

export interface FeatureContribution {
  feature: string;
  log_ml: number;
  log_bf: number;
}

export type AssessmentStatus = "ok" | "insufficient-data";

export interface AssessmentRow {
  scenario_id: string;
  log_ml: number;
  log_bf: number;
  posterior: number;
  status: AssessmentStatus;
  per_feature: FeatureContribution[];
  mc_se: number | null;
}

export interface AssessmentRecord {
  model: string;
  window_id: string;
  ts: number;
  assessments: AssessmentRow[];
  reference_log_ml: number;
}

export interface FeatureTestRow {
  name: string;
  test: string;
  stat: number;
  p: number;
  p_adj: number;
  drifted: boolean;
}

export interface AlertRecord {
  model: string;
  window_id: string;
  ts: number;
  features: FeatureTestRow[];
}

export interface DecisionInfo {
  decision: "auto-trigger" | "notify" | "none";
  scenario_id: string | null;
  bf: number;
  threshold: number;
  rationale: string;
}

export interface DecisionRecord extends DecisionInfo {
  model: string;
  window_id: string;
  eval_index: number;
}

export type ApprovalStateName = "pending" | "approved" | "rejected" | "expired";

export interface ApprovalItem {
  approval_id: string;
  model: string;
  window_id: string;
  scenario_id: string;
  decision: DecisionInfo;
  created_ts: number;
  expires_ts: number;
  state: ApprovalStateName;
  resolver: string | null;
  resolved_ts: number | null;
}

export interface ScenarioUnderstanding {
  severity: string;
  transition_speed: string;
  duration: string;
  recurrence: string;
  likelihood: string;
  note?: string;
}

export interface ScenarioEntry {
  id: string;
  model: { name: string; version: string };
  description: string;
  estimates: Array<Record<string, unknown>>;
  understanding: ScenarioUnderstanding;
  subgroup?: unknown;
  response?: { kind: string; payload: Record<string, unknown>; automated: boolean };
}

export interface RegistryDocument {
  scenarios: ScenarioEntry[];
}

export interface HealthInfo {
  status: string;
  models: string[];
  bf_threshold: number;
  window_size: number;
  cooldown_windows: number;
  scenarios: number;
}
