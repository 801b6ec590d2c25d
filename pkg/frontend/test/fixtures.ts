/** Canned API payloads and a fetch stub serving them. */

import type {
  ApprovalItem,
  AssessmentRecord,
  HealthInfo,
  RegistryDocument,
} from "../src/types.js";
import type { FetchLike } from "../src/api.js";

export const HEALTH: HealthInfo = {
  status: "ok",
  models: ["churn"],
  bf_threshold: 5.0,
  window_size: 500,
  cooldown_windows: 10,
  scenarios: 2,
};

/** Two scenarios with Bayes factors 6.0 and 1.2, reference last. */
export const ASSESSMENT: AssessmentRecord = {
  model: "churn",
  window_id: "w-churn-00000600",
  ts: 1712000000000,
  reference_log_ml: -812.4,
  assessments: [
    {
      scenario_id: "marketing-campaign",
      log_ml: -810.6,
      log_bf: Math.log(6.0),
      posterior: 0.62,
      status: "ok",
      per_feature: [
        { feature: "customer_age", log_ml: -404.1, log_bf: 1.79 },
        { feature: "recent_page_visits", log_ml: -300.2, log_bf: 0.0 },
        { feature: "plan_type", log_ml: -106.3, log_bf: 0.0 },
      ],
      mc_se: null,
    },
    {
      scenario_id: "competitor-campaign",
      log_ml: -812.2,
      log_bf: Math.log(1.2),
      posterior: 0.13,
      status: "ok",
      per_feature: [
        { feature: "customer_age", log_ml: -405.9, log_bf: 0.0 },
        { feature: "recent_page_visits", log_ml: -300.0, log_bf: 0.18 },
        { feature: "plan_type", log_ml: -106.3, log_bf: 0.0 },
      ],
      mc_se: null,
    },
    {
      scenario_id: "__reference__",
      log_ml: -812.4,
      log_bf: 0.0,
      posterior: 0.25,
      status: "ok",
      per_feature: [],
      mc_se: null,
    },
  ],
};

export const REGISTRY: RegistryDocument = {
  scenarios: [
    {
      id: "marketing-campaign",
      model: { name: "churn", version: "1.0" },
      description: "Campaign targeting young people shifts the age distribution.",
      estimates: [{ feature: "customer_age", parameter: "mean", family: "normal",
                    location: 18, spread: 1, mode: "absolute" }],
      understanding: { severity: "low", transition_speed: "high", duration: "moderate",
                        recurrence: "moderate", likelihood: "high" },
      response: { kind: "model-swap-command", payload: { target: "churn-young" },
                   automated: false },
    },
    {
      id: "competitor-campaign",
      model: { name: "churn", version: "1.0" },
      description: "Competitor product pulls young users away.",
      estimates: [{ feature: "recent_page_visits", parameter: "rate", family: "gamma",
                    location: 4, spread: 1, mode: "absolute" }],
      understanding: { severity: "high", transition_speed: "high", duration: "high",
                        recurrence: "low", likelihood: "moderate" },
    },
  ],
};

export function pendingApproval(id = "ap-000001", state: ApprovalItem["state"] = "pending"): ApprovalItem {
  return {
    approval_id: id,
    model: "churn",
    window_id: "w-churn-00000600",
    scenario_id: "marketing-campaign",
    decision: {
      decision: "notify",
      scenario_id: "marketing-campaign",
      bf: 6.0,
      threshold: 5.0,
      rationale: "awaiting-approval: response requires sign-off",
    },
    created_ts: 1712000000000,
    expires_ts: 1712086400000,
    state,
    resolver: null,
    resolved_ts: null,
  };
}

export interface FixtureOptions {
  approvals?: ApprovalItem[];
  /** POST /approvals handler; default approves happily. */
  resolve?: (id: string, body: { verdict: string }) => { status: number; body: unknown };
}

export interface FixtureServer {
  fetch: FetchLike;
  posts: Array<{ url: string; body: unknown }>;
}

function json(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

export function makeFixtureServer(options: FixtureOptions = {}): FixtureServer {
  const approvals = options.approvals ?? [pendingApproval()];
  const posts: FixtureServer["posts"] = [];
  const resolve =
    options.resolve ??
    ((id: string) => {
      const item = approvals.find((a) => a.approval_id === id);
      if (!item) return { status: 404, body: { detail: "unknown" } };
      const resolved = { ...item, state: "approved", resolver: "dashboard",
                         resolved_ts: 1712000500000 };
      return { status: 200, body: resolved };
    });

  const fetchFn: FetchLike = async (url, init) => {
    const method = init?.method ?? "GET";
    if (method === "POST" && url.includes("/approvals/")) {
      const id = url.split("/approvals/")[1];
      const body = JSON.parse(String(init?.body ?? "{}"));
      posts.push({ url, body });
      const result = resolve(id, body);
      return json(result.status, result.body);
    }
    if (url.endsWith("/healthz")) return json(200, HEALTH);
    if (url.includes("/assessments/latest")) return json(200, ASSESSMENT);
    if (url.includes("/alerts")) return json(200, { alerts: [] });
    if (url.includes("/decisions")) return json(200, { decisions: [] });
    if (url.endsWith("/scenarios")) return json(200, REGISTRY);
    if (url.includes("/approvals")) return json(200, { approvals });
    return json(404, { detail: `no fixture for ${url}` });
  };
  return { fetch: fetchFn, posts };
}
