/** Mapping from API payloads to display rows.
 *
 * The server already emits assessments in responder order, so this layer
 * never sorts and never recomputes Bayes factors or posteriors; every
 * displayed number is a formatted API field. */

import type { AssessmentRecord, AssessmentRow, ScenarioEntry } from "./types.js";

export const REFERENCE_ID = "__reference__";

/** Above exp(log BF) = 10^6 the display saturates. */
export const BF_OVERFLOW_LOG = 6 * Math.LN10;

export type StatusBadge = "ok" | "insufficient-data" | "reference";

export interface FeatureBar {
  feature: string;
  logBf: number;
  widthPct: number;
}

export interface AssessmentViewModel {
  scenarioId: string;
  label: string;
  description: string;
  logBf: number;
  bfDisplay: string;
  posterior: number;
  posteriorDisplay: string;
  statusBadge: StatusBadge;
  highlighted: boolean;
  featureBars: FeatureBar[];
  understanding: string;
}

export function formatBayesFactor(logBf: number): string {
  if (!Number.isFinite(logBf)) return "–";
  if (logBf > BF_OVERFLOW_LOG) return "> 10⁶";
  const bf = Math.exp(logBf);
  if (bf >= 100) return bf.toFixed(0);
  if (bf >= 10) return bf.toFixed(1);
  return bf.toFixed(2);
}

export function formatPosterior(value: number): string {
  return `${(100 * value).toFixed(1)}%`;
}

function understandingSummary(entry: ScenarioEntry | undefined): string {
  if (!entry) return "";
  const u = entry.understanding;
  return `severity ${u.severity} · speed ${u.transition_speed} · ` +
    `duration ${u.duration} · recurrence ${u.recurrence}`;
}

function featureBars(row: AssessmentRow): FeatureBar[] {
  const contributions = row.per_feature.filter((c) => c.log_bf !== 0);
  const maxAbs = Math.max(1e-12, ...contributions.map((c) => Math.abs(c.log_bf)));
  return contributions.map((c) => ({
    feature: c.feature,
    logBf: c.log_bf,
    widthPct: Math.round((100 * Math.abs(c.log_bf)) / maxAbs),
  }));
}

/** One view model per assessment row, in exactly the server's order. */
export function toViewModels(
  record: AssessmentRecord,
  registryById: Map<string, ScenarioEntry>,
  threshold: number,
): AssessmentViewModel[] {
  const logThreshold = Math.log(threshold);
  return record.assessments.map((row) => {
    const isReference = row.scenario_id === REFERENCE_ID;
    const entry = registryById.get(row.scenario_id);
    const badge: StatusBadge = isReference ? "reference" : row.status;
    return {
      scenarioId: row.scenario_id,
      label: isReference ? "reference (no drift)" : row.scenario_id,
      description: isReference
        ? "Baseline fit from training data"
        : entry?.description ?? "",
      logBf: row.log_bf,
      bfDisplay: isReference ? "1.00" : formatBayesFactor(row.log_bf),
      posterior: row.posterior,
      posteriorDisplay: formatPosterior(row.posterior),
      statusBadge: badge,
      highlighted: !isReference && row.status === "ok" && row.log_bf >= logThreshold,
      featureBars: isReference ? [] : featureBars(row),
      understanding: understandingSummary(entry),
    };
  });
}
