/** Bootstrap: poll the service every 5 s, render into the page, and wire
 * approval buttons through event delegation. */

import { DriftwatchApi } from "./api.js";
import { DashboardController, DashboardState } from "./controller.js";
import {
  renderAlerts,
  renderApprovals,
  renderAssessmentTable,
  renderRegistry,
  renderStatusBar,
} from "./render.js";

const POLL_INTERVAL_MS = 5000;

function mount(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el;
}

function render(state: DashboardState): void {
  mount("statusbar").innerHTML = renderStatusBar(
    state.health, state.lastDecision, state.error,
  );
  mount("assessments").innerHTML = renderAssessmentTable(
    state.viewModels,
    state.assessment && state.health
      ? {
          windowId: state.assessment.window_id,
          ts: state.assessment.ts,
          threshold: state.health.bf_threshold,
        }
      : null,
  );
  mount("approvals").innerHTML = renderApprovals(
    state.approvals, state.conflicts, state.busy,
  );
  mount("alerts").innerHTML = renderAlerts(state.alerts);
  mount("registry").innerHTML = renderRegistry(state.scenarios);
}

const api = new DriftwatchApi("");
const controller = new DashboardController(api, render);

document.addEventListener("click", (event) => {
  const target = event.target as HTMLElement;
  const approvalId = target.dataset?.approval;
  const verdict = target.dataset?.verdict as "approve" | "reject" | undefined;
  if (approvalId && verdict) {
    void controller.submitVerdict(approvalId, verdict);
  }
});

void controller.refresh();
setInterval(() => void controller.refresh(), POLL_INTERVAL_MS);
