/** HTML-string renderers. Pure functions of state, so the table contents
 * are testable without a DOM; main.ts mounts the strings via innerHTML. */

import type { AlertRecord, ApprovalItem, DecisionRecord, HealthInfo, ScenarioEntry } from "./types.js";
import type { AssessmentViewModel } from "./viewmodel.js";

export function escapeHtml(value: unknown): string {
  return String(value)
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

function badge(cls: string, text: string): string {
  return `<span class="badge ${cls}">${escapeHtml(text)}</span>`;
}

export function renderAssessmentTable(
  rows: AssessmentViewModel[],
  meta: { windowId: string; ts: number; threshold: number } | null,
): string {
  if (!meta || rows.length === 0) {
    return `<div class="empty">No assessment yet — waiting for a drift alert.</div>`;
  }
  const head =
    `<div class="table-meta">window ${escapeHtml(meta.windowId)} · ` +
    `Bayes factor threshold ${escapeHtml(meta.threshold)} (highlighted rows reach it)</div>` +
    `<table class="assessments"><thead><tr>` +
    `<th>scenario</th><th>BF</th><th>posterior</th><th>status</th>` +
    `<th>evidence by feature</th><th>understanding</th></tr></thead><tbody>`;
  const body = rows
    .map((row) => {
      const classes = [
        row.highlighted ? "highlight" : "",
        row.statusBadge === "insufficient-data" ? "greyed" : "",
        row.statusBadge === "reference" ? "reference" : "",
      ]
        .filter(Boolean)
        .join(" ");
      const bars = row.featureBars
        .map(
          (bar) =>
            `<div class="bar-row"><span class="bar-label">${escapeHtml(bar.feature)}</span>` +
            `<span class="bar ${bar.logBf >= 0 ? "pos" : "neg"}" style="width:${bar.widthPct}%"></span>` +
            `<span class="bar-value">${bar.logBf >= 0 ? "+" : ""}${bar.logBf.toFixed(1)}</span></div>`,
        )
        .join("");
      const statusBadge =
        row.statusBadge === "ok"
          ? badge("ok", "ok")
          : row.statusBadge === "reference"
            ? badge("ref", "reference")
            : badge("nodata", "insufficient data");
      return (
        `<tr class="${classes}" data-scenario="${escapeHtml(row.scenarioId)}">` +
        `<td><div class="scenario-name">${escapeHtml(row.label)}</div>` +
        `<div class="scenario-desc">${escapeHtml(row.description)}</div></td>` +
        `<td class="bf">${escapeHtml(row.bfDisplay)}</td>` +
        `<td class="posterior">${escapeHtml(row.posteriorDisplay)}</td>` +
        `<td>${statusBadge}</td>` +
        `<td class="bars">${bars}</td>` +
        `<td class="understanding">${escapeHtml(row.understanding)}</td></tr>`
      );
    })
    .join("");
  return head + body + "</tbody></table>";
}

export function renderApprovals(
  items: ApprovalItem[],
  conflicts: Map<string, string>,
  busy: Set<string>,
): string {
  if (items.length === 0) {
    return `<div class="empty">No approval items.</div>`;
  }
  return items
    .map((item) => {
      const conflict = conflicts.get(item.approval_id);
      const pending = item.state === "pending";
      const disabled = busy.has(item.approval_id) ? "disabled" : "";
      const buttons = pending
        ? `<button class="approve" data-approval="${escapeHtml(item.approval_id)}" ` +
          `data-verdict="approve" ${disabled}>Approve</button>` +
          `<button class="reject" data-approval="${escapeHtml(item.approval_id)}" ` +
          `data-verdict="reject" ${disabled}>Reject</button>`
        : "";
      return (
        `<div class="approval ${escapeHtml(item.state)}" id="approval-${escapeHtml(item.approval_id)}">` +
        `<div class="approval-head">${escapeHtml(item.approval_id)} · ` +
        `${escapeHtml(item.scenario_id)} · BF ${item.decision.bf.toFixed(2)} · ` +
        `${badge(item.state, item.state)}</div>` +
        `<div class="approval-rationale">${escapeHtml(item.decision.rationale)}</div>` +
        (conflict ? `<div class="conflict">${escapeHtml(conflict)}</div>` : "") +
        `<div class="approval-actions">${buttons}</div></div>`
      );
    })
    .join("");
}

export function renderAlerts(alerts: AlertRecord[]): string {
  if (alerts.length === 0) {
    return `<div class="empty">No drift alerts.</div>`;
  }
  return alerts
    .map((alert) => {
      const drifted = alert.features.filter((f) => f.drifted);
      const rows = drifted
        .map(
          (f) =>
            `<span class="feature-pill">${escapeHtml(f.name)} ` +
            `(${escapeHtml(f.test)}, p_adj ${f.p_adj.toExponential(1)})</span>`,
        )
        .join(" ");
      return (
        `<div class="alert"><div>${escapeHtml(alert.window_id)}</div>` +
        `<div class="alert-features">${rows}</div></div>`
      );
    })
    .join("");
}

export function renderRegistry(scenarios: ScenarioEntry[]): string {
  if (scenarios.length === 0) {
    return `<div class="empty">Registry is empty.</div>`;
  }
  return scenarios
    .map((s) => {
      const estimates = s.estimates
        .map((e) => {
          const parts = e as Record<string, unknown>;
          return (
            `<li>${escapeHtml(parts.feature)}: ${escapeHtml(parts.parameter)} ~ ` +
            `${escapeHtml(parts.family)}(${escapeHtml(JSON.stringify(parts.location))}, ` +
            `${escapeHtml(parts.spread)}) [${escapeHtml(parts.mode)}]</li>`
          );
        })
        .join("");
      const response = s.response
        ? `${s.response.kind}${s.response.automated ? " (automated)" : " (needs approval)"}`
        : "none";
      return (
        `<div class="registry-entry" id="scenario-${escapeHtml(s.id)}">` +
        `<div class="registry-head">${escapeHtml(s.id)} ${badge("likelihood", s.understanding.likelihood)}</div>` +
        `<div class="registry-desc">${escapeHtml(s.description)}</div>` +
        `<ul>${estimates}</ul>` +
        `<div class="registry-response">response: ${escapeHtml(response)}</div></div>`
      );
    })
    .join("");
}

export function renderStatusBar(
  health: HealthInfo | null,
  lastDecision: DecisionRecord | null,
  error: string | null,
): string {
  if (error) {
    return `<span class="dot dead"></span> ${escapeHtml(error)} — retrying`;
  }
  if (!health) {
    return `<span class="dot dead"></span> connecting…`;
  }
  const decision = lastDecision
    ? ` · last decision: ${escapeHtml(lastDecision.decision)}` +
      (lastDecision.scenario_id ? ` (${escapeHtml(lastDecision.scenario_id)})` : "") +
      ` — ${escapeHtml(lastDecision.rationale)}`
    : "";
  return (
    `<span class="dot live"></span> ${escapeHtml(health.models.join(", "))} · ` +
    `threshold ${escapeHtml(health.bf_threshold)} · window ${escapeHtml(health.window_size)} · ` +
    `cooldown ${escapeHtml(health.cooldown_windows)} windows · ` +
    `${escapeHtml(health.scenarios)} scenarios${decision}`
  );
}
