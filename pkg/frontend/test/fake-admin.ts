/**
 * In-memory stand-in for the gateway admin API, exposed as a FetchLike.
 * Routes and response shapes mirror the real server; tests mutate
 * `state` directly to stage scenarios and read `log` to observe traffic.
 */
import type { FetchLike } from "../src/api.js";
import type {
  ApprovalRequestWire,
  RecordWire,
  SealedWire,
  ServerWire,
  VerifyWire,
} from "../src/types.js";

export interface FakeState {
  approvals: ApprovalRequestWire[];
  records: SealedWire[];
  servers: ServerWire[];
  policy: unknown;
  metrics: Record<string, unknown>;
  verifyLive: VerifyWire;
  verifyExport: VerifyWire;
  policyProblem: { path: string; message: string } | null;
  resolveStatus: number | null; // force next resolve to fail with this status
}

export interface LoggedCall {
  method: string;
  path: string;
  body?: string;
}

let seqCounter = 0;

export function sealed(partial: Partial<RecordWire>): SealedWire {
  const seq = partial.seq ?? seqCounter++;
  return {
    schema: 1,
    record: {
      user_id: "alice",
      session_id: "gs-000001",
      event_kind: "tool_call",
      seq,
      timestamp: `2026-01-01T00:00:${String(seq % 60).padStart(2, "0")}Z`,
      findings: [],
      payload_summary: "",
      ...partial,
    },
    prev_hash: "00".repeat(32),
    chain_hash: (seq % 16).toString(16).repeat(64).slice(0, 64),
    signature: "ab".repeat(64),
  };
}

export function server(partial: Partial<ServerWire>): ServerWire {
  return {
    server_id: "srv",
    display_name: "srv",
    transport_kind: "streamable_http",
    address: "http://127.0.0.1:1",
    version_pin: "1.0",
    execution_mode: "any",
    approved_tools: [],
    status: "approved",
    env_allowlist: [],
    suspended_tools: [],
    discovery_disabled: [],
    ...partial,
  };
}

export function fakeAdmin(overrides: Partial<FakeState> = {}): {
  state: FakeState;
  log: LoggedCall[];
  fetchFn: FetchLike;
} {
  const state: FakeState = {
    approvals: [],
    records: [],
    servers: [],
    policy: { rules: [] },
    metrics: { requests: 0, head_hash: "aa".repeat(32), public_key: "bb".repeat(32) },
    verifyLive: { ok: true, records: 0 },
    verifyExport: { ok: true, records: 0 },
    policyProblem: null,
    resolveStatus: null,
    ...overrides,
  };
  const log: LoggedCall[] = [];

  const json = (status: number, body: unknown): Response =>
    new Response(JSON.stringify(body), {
      status,
      headers: { "Content-Type": "application/json" },
    });

  const fetchFn: FetchLike = async (url, init) => {
    const method = init?.method ?? "GET";
    const path = new URL(url).pathname;
    const body = typeof init?.body === "string" ? init.body : undefined;
    log.push({ method, path, body });

    if (method === "GET" && path === "/v1/approvals") {
      return json(200, { approvals: state.approvals });
    }
    if (method === "POST" && path.startsWith("/v1/approvals/")) {
      if (state.resolveStatus) {
        const status = state.resolveStatus;
        state.resolveStatus = null;
        return json(status, { error: `request already resolved (status ${status})` });
      }
      const id = decodeURIComponent(path.split("/").pop()!);
      const found = state.approvals.find((r) => r.request_id === id);
      if (!found) return json(404, { error: `no approval request '${id}'` });
      const verdict = (JSON.parse(body ?? "{}") as { verdict?: string }).verdict ?? "";
      found.state = verdict;
      state.approvals = state.approvals.filter((r) => r.request_id !== id);
      return json(200, { request: found });
    }
    if (method === "GET" && (path === "/v1/alerts" || path === "/v1/provenance")) {
      const afterSeq = Number(new URL(url).searchParams.get("after_seq") ?? "-1");
      const kind = path === "/v1/alerts" ? "alert" : null;
      const matching = state.records.filter(
        (s) => s.record.seq > afterSeq && (!kind || s.record.event_kind === kind),
      );
      const key = path === "/v1/alerts" ? "alerts" : "records";
      return json(200, { [key]: matching, next_after_seq: null });
    }
    if (method === "GET" && path === "/v1/provenance/export") {
      const lines = state.records.map((s) => JSON.stringify(s)).join("\n");
      return new Response(lines, { status: 200, headers: { "Content-Type": "application/jsonl" } });
    }
    if (method === "POST" && path === "/v1/provenance/verify") {
      return json(200, body && body.trim() ? state.verifyExport : state.verifyLive);
    }
    if (method === "GET" && path === "/v1/registry") {
      return json(200, { servers: state.servers, snapshots: {} });
    }
    if (method === "GET" && path === "/v1/policy") {
      return json(200, { policy: state.policy });
    }
    if (method === "PUT" && path === "/v1/policy") {
      if (state.policyProblem) return json(422, { error: state.policyProblem });
      state.policy = JSON.parse(body ?? "null");
      return json(200, { ok: true });
    }
    if (method === "GET" && path === "/v1/metrics") {
      return json(200, state.metrics);
    }
    return json(404, { error: `no route for ${method} ${path}` });
  };

  return { state, log, fetchFn };
}
