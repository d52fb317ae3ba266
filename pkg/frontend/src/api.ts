import type {
  AlertPage,
  ApprovalRequestWire,
  MetricsWire,
  ProvenanceFilters,
  RecordPage,
  RegistryWire,
  VerifyWire,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** Non-2xx admin API reply, body preserved verbatim for the UI to surface. */
export class AdminApiError extends Error {
  constructor(
    readonly status: number,
    readonly body: unknown,
  ) {
    super(`admin API ${status}: ${JSON.stringify(body)}`);
    this.name = "AdminApiError";
  }

  /** The server's own error text, unchanged. */
  get detail(): string {
    const body = this.body as { error?: unknown } | null;
    if (body && typeof body === "object" && body.error !== undefined) {
      return typeof body.error === "string" ? body.error : JSON.stringify(body.error);
    }
    return JSON.stringify(this.body);
  }
}

/**
 * Typed client for the gateway admin API. Every console read and write goes
 * through here; the only mutating calls are {@link resolveApproval} and
 * {@link putPolicy}.
 */
export class AdminClient {
  private readonly base: string;

  constructor(
    baseUrl: string,
    private readonly token: string,
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {
    this.base = baseUrl.replace(/\/+$/, "");
  }

  private async request(method: string, path: string, body?: unknown): Promise<unknown> {
    const init: RequestInit = {
      method,
      headers: { Authorization: `Bearer ${this.token}` },
    };
    if (body !== undefined) {
      init.headers = { ...(init.headers as Record<string, string>), "Content-Type": "application/json" };
      init.body = typeof body === "string" ? body : JSON.stringify(body);
    }
    const res = await this.fetchFn(this.base + path, init);
    const text = await res.text();
    // exact media type: application/jsonl (the export) must stay raw text
    const media = (res.headers.get("content-type") ?? "").split(";")[0]!.trim();
    const parsed = media === "application/json" && text ? JSON.parse(text) : text;
    if (!res.ok) {
      throw new AdminApiError(res.status, parsed);
    }
    return parsed;
  }

  async listApprovals(): Promise<ApprovalRequestWire[]> {
    const doc = (await this.request("GET", "/approvals")) as { approvals: ApprovalRequestWire[] };
    return doc.approvals;
  }

  async resolveApproval(requestId: string, verdict: string): Promise<ApprovalRequestWire> {
    const doc = (await this.request("POST", `/approvals/${encodeURIComponent(requestId)}`, {
      verdict,
    })) as { request: ApprovalRequestWire };
    return doc.request;
  }

  async alerts(afterSeq = -1, limit = 200): Promise<AlertPage> {
    return (await this.request("GET", `/alerts?after_seq=${afterSeq}&limit=${limit}`)) as AlertPage;
  }

  async provenance(filters: ProvenanceFilters = {}): Promise<RecordPage> {
    const params = new URLSearchParams();
    for (const [key, value] of Object.entries(filters)) {
      if (value !== undefined && value !== "") params.set(key, String(value));
    }
    const qs = params.toString();
    return (await this.request("GET", `/provenance${qs ? "?" + qs : ""}`)) as RecordPage;
  }

  async exportJsonl(): Promise<string> {
    return (await this.request("GET", "/provenance/export")) as string;
  }

  /**
   * Verify the live ledger (no body) or a pasted/exported JSONL log.
   * `expectedHead` pins the export to a published chain head so a truncated
   * copy cannot pass as complete.
   */
  async verify(exportText?: string, expectedHead?: string): Promise<VerifyWire> {
    const qs = expectedHead ? `?expected_head=${encodeURIComponent(expectedHead)}` : "";
    return (await this.request("POST", `/provenance/verify${qs}`, exportText ?? "")) as VerifyWire;
  }

  async registry(): Promise<RegistryWire> {
    return (await this.request("GET", "/registry")) as RegistryWire;
  }

  async getPolicy(): Promise<unknown> {
    const doc = (await this.request("GET", "/policy")) as { policy: unknown };
    return doc.policy;
  }

  async putPolicy(doc: unknown): Promise<void> {
    await this.request("PUT", "/policy", doc);
  }

  async metrics(): Promise<MetricsWire> {
    return (await this.request("GET", "/metrics")) as MetricsWire;
  }
}
