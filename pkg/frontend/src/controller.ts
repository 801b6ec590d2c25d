/** Dashboard state and actions.
 *
 * State is a pure snapshot of API responses; approving is optimistic but
 * always reconciled with the server's answer, and a conflict (someone
 * else resolved it, or the item expired) surfaces the server state
 * instead of the optimistic one. */

import { ApprovalConflictError, DriftwatchApi, ServiceUnreachableError } from "./api.js";
import type {
  AlertRecord,
  ApprovalItem,
  AssessmentRecord,
  DecisionRecord,
  HealthInfo,
  ScenarioEntry,
} from "./types.js";
import { AssessmentViewModel, toViewModels } from "./viewmodel.js";

export interface DashboardState {
  health: HealthInfo | null;
  assessment: AssessmentRecord | null;
  viewModels: AssessmentViewModel[];
  approvals: ApprovalItem[];
  alerts: AlertRecord[];
  scenarios: ScenarioEntry[];
  lastDecision: DecisionRecord | null;
  error: string | null;
  conflicts: Map<string, string>;
  busy: Set<string>;
}

export class DashboardController {
  readonly state: DashboardState = {
    health: null,
    assessment: null,
    viewModels: [],
    approvals: [],
    alerts: [],
    scenarios: [],
    lastDecision: null,
    error: null,
    conflicts: new Map(),
    busy: new Set(),
  };

  constructor(
    private readonly api: DriftwatchApi,
    private readonly onChange: (state: DashboardState) => void = () => {},
  ) {}

  private emit(): void {
    this.onChange(this.state);
  }

  async refresh(): Promise<void> {
    try {
      const [health, assessment, approvals, alerts, registry, decisions] =
        await Promise.all([
          this.api.health(),
          this.api.latestAssessment(),
          this.api.approvals(),
          this.api.alerts(),
          this.api.scenarios(),
          this.api.decisions(1),
        ]);
      this.state.health = health;
      this.state.assessment = assessment;
      this.state.approvals = approvals;
      this.state.alerts = alerts;
      this.state.scenarios = registry.scenarios;
      this.state.lastDecision = decisions[0] ?? null;
      this.state.error = null;
      const byId = new Map(registry.scenarios.map((s) => [s.id, s]));
      this.state.viewModels = assessment
        ? toViewModels(assessment, byId, health.bf_threshold)
        : [];
    } catch (err) {
      this.state.error =
        err instanceof ServiceUnreachableError ? err.message : `refresh failed: ${err}`;
    }
    this.emit();
  }

  /** Approve or reject one item. Returns the final state name.
   *
   * Exactly one POST per click: re-entrant calls while a verdict is in
   * flight are ignored. The optimistic state is reconciled against the
   * server response; failures roll back to pending. */
  async submitVerdict(approvalId: string, verdict: "approve" | "reject"): Promise<string> {
    if (this.state.busy.has(approvalId)) {
      return this.itemState(approvalId);
    }
    const index = this.state.approvals.findIndex((a) => a.approval_id === approvalId);
    if (index < 0) return "unknown";
    const original = this.state.approvals[index];
    this.state.busy.add(approvalId);
    this.state.conflicts.delete(approvalId);
    // optimistic update, reconciled below
    this.state.approvals[index] = {
      ...original,
      state: verdict === "approve" ? "approved" : "rejected",
    };
    this.emit();
    try {
      const resolved = await this.api.resolveApproval(approvalId, verdict);
      this.state.approvals[index] = resolved;
    } catch (err) {
      if (err instanceof ApprovalConflictError) {
        this.state.approvals[index] = {
          ...original,
          state: err.state as ApprovalItem["state"],
        };
        this.state.conflicts.set(
          approvalId,
          `Not applied: item is already ${err.state} on the server.`,
        );
      } else {
        // network failure: the action did not happen; stay pending
        this.state.approvals[index] = original;
        this.state.conflicts.set(approvalId, `Request failed, not applied: ${err}`);
      }
    } finally {
      this.state.busy.delete(approvalId);
      this.emit();
    }
    return this.itemState(approvalId);
  }

  private itemState(approvalId: string): string {
    return (
      this.state.approvals.find((a) => a.approval_id === approvalId)?.state ?? "unknown"
    );
  }
}
