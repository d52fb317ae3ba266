/** Wire shapes of the gateway admin API (/v1). The console never invents
 * state: everything rendered is a projection of these documents. */

export interface ToolWire {
  name: string;
  description?: string;
  inputSchema?: unknown;
  annotations?: Record<string, unknown>;
}

export interface ApprovalRequestWire {
  request_id: string;
  server_id: string;
  tool: ToolWire;
  first_seen: string;
  requested_by: string;
  state: string; // pending | approved | denied | disabled
}

export interface FindingWire {
  class: string; // secret | pii | injection
  subclass: string;
  direction: string;
  confidence: string;
  finding_id: string;
  span?: [number, number];
  path?: Array<string | number>;
  redacted_preview?: string;
}

export interface DecisionWire {
  outcome: string; // allow | deny
  reason_code?: string;
  rule_id?: string;
  detail?: Record<string, unknown>;
}

export interface RecordWire {
  user_id: string;
  session_id: string;
  event_kind: string; // tool_call | tool_response | decision | alert | ...
  seq: number;
  timestamp: string;
  server_id?: string | null;
  tool?: string | null;
  params_digest?: string | null;
  response_digest?: string | null;
  data_sources?: string[];
  findings: FindingWire[];
  decision?: DecisionWire | null;
  payload_summary: string;
  correlation_id?: string | null;
  payload_bytes?: number;
}

export interface SealedWire {
  schema: number;
  record: RecordWire;
  prev_hash: string;
  chain_hash: string;
  signature: string;
}

export interface RecordPage {
  records: SealedWire[];
  next_after_seq: number | null;
}

export interface AlertPage {
  alerts: SealedWire[];
  next_after_seq: number | null;
}

export interface VerifyWire {
  ok: boolean;
  broken_at?: number;
  cause?: string; // hash | signature | gap
  records?: number;
  public_key?: string;
}

export interface ServerWire {
  server_id: string;
  display_name: string;
  transport_kind: string;
  address: unknown;
  version_pin: string;
  execution_mode: string;
  approved_tools: string[];
  status: string;
  env_allowlist: string[];
  suspended_tools: string[];
  discovery_disabled: string[];
}

export interface RegistryWire {
  servers: ServerWire[];
  snapshots: Record<string, { digest: string; taken_at: string; tool_count: number }>;
}

export interface PolicyProblem {
  path: string;
  message: string;
}

export interface MetricsWire {
  head_hash: string;
  public_key: string;
  [counter: string]: unknown;
}

export interface ProvenanceFilters {
  user_id?: string;
  session_id?: string;
  server_id?: string;
  tool?: string;
  event_kind?: string;
  since?: string;
  until?: string;
  after_seq?: number;
  limit?: number;
}
