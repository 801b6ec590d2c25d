/** Thin fetch client for the monitoring service. All dashboard data comes
 * through these calls; the UI never touches the store directly. */

import type {
  AlertRecord,
  ApprovalItem,
  AssessmentRecord,
  DecisionRecord,
  HealthInfo,
  RegistryDocument,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** The item was already resolved (or expired); carries the server state. */
export class ApprovalConflictError extends Error {
  constructor(message: string, readonly state: string) {
    super(message);
    this.name = "ApprovalConflictError";
  }
}

export class ServiceUnreachableError extends Error {
  constructor(cause: unknown) {
    super(`service unreachable: ${cause}`);
    this.name = "ServiceUnreachableError";
  }
}

export class DriftwatchApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path);
    } catch (err) {
      throw new ServiceUnreachableError(err);
    }
    if (!response.ok) {
      throw new Error(`GET ${path} failed: HTTP ${response.status}`);
    }
    return response.json() as Promise<T>;
  }

  async health(): Promise<HealthInfo> {
    return this.getJson("/healthz");
  }

  /** Latest assessment, or null when none has been produced yet (404). */
  async latestAssessment(model?: string): Promise<AssessmentRecord | null> {
    const query = model ? `?model=${encodeURIComponent(model)}` : "";
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}/assessments/latest${query}`);
    } catch (err) {
      throw new ServiceUnreachableError(err);
    }
    if (response.status === 404) return null;
    if (!response.ok) throw new Error(`latest assessment failed: HTTP ${response.status}`);
    return response.json() as Promise<AssessmentRecord>;
  }

  async alerts(limit = 20): Promise<AlertRecord[]> {
    const body = await this.getJson<{ alerts: AlertRecord[] }>(`/alerts?limit=${limit}`);
    return body.alerts;
  }

  async decisions(limit = 20): Promise<DecisionRecord[]> {
    const body = await this.getJson<{ decisions: DecisionRecord[] }>(`/decisions?limit=${limit}`);
    return body.decisions;
  }

  async scenarios(): Promise<RegistryDocument> {
    return this.getJson("/scenarios");
  }

  async approvals(state?: string): Promise<ApprovalItem[]> {
    const query = state ? `?state=${encodeURIComponent(state)}` : "";
    const body = await this.getJson<{ approvals: ApprovalItem[] }>(`/approvals${query}`);
    return body.approvals;
  }

  /** Resolve an approval; 409 raises ApprovalConflictError with the
   * server-side state so the UI can reconcile. */
  async resolveApproval(
    approvalId: string,
    verdict: "approve" | "reject",
    resolver = "dashboard",
  ): Promise<ApprovalItem> {
    let response: Response;
    try {
      response = await this.fetchFn(
        `${this.baseUrl}/approvals/${encodeURIComponent(approvalId)}`,
        {
          method: "POST",
          headers: { "Content-Type": "application/json" },
          body: JSON.stringify({ verdict, resolver }),
        },
      );
    } catch (err) {
      throw new ServiceUnreachableError(err);
    }
    if (response.status === 409) {
      const body = (await response.json()) as { detail: string; state: string };
      throw new ApprovalConflictError(body.detail, body.state);
    }
    if (response.status === 404) {
      throw new Error(`unknown approval ${approvalId}`);
    }
    if (!response.ok) {
      throw new Error(`approval ${approvalId} failed: HTTP ${response.status}`);
    }
    return response.json() as Promise<ApprovalItem>;
  }
}
