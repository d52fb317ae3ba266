import { AdminApiError, AdminClient } from "./api.js";
import { badge, esc, markSpans } from "./html.js";
import type {
  ApprovalRequestWire,
  FindingWire,
  RegistryWire,
  SealedWire,
} from "./types.js";

/** Context the queue borrows from sibling panels to enrich each row. */
export interface ApprovalContext {
  registry?: RegistryWire;
  alerts?: SealedWire[];
}

/**
 * Pending tool queue. A request is either a tool the server grew after
 * approval (ADDED) or a previously approved tool whose definition changed
 * and was suspended (MODIFIED, with the changed fields pulled from the
 * matching alert). Verdicts are the console's only write besides policy
 * uploads.
 */
export class ApprovalsView {
  approvals: ApprovalRequestWire[] = [];
  lastError: string | null = null;

  constructor(private readonly api: AdminClient) {}

  async refresh(): Promise<void> {
    this.approvals = await this.api.listApprovals();
  }

  kindOf(request: ApprovalRequestWire, registry?: RegistryWire): "added" | "modified" {
    const server = registry?.servers.find((s) => s.server_id === request.server_id);
    if (server && server.approved_tools.includes(request.tool.name)) return "modified";
    return "added";
  }

  /** Changed fields reported by the newest behavior-change alert for this tool. */
  changedFields(request: ApprovalRequestWire, alerts?: SealedWire[]): string[] {
    for (const sealed of [...(alerts ?? [])].reverse()) {
      if (sealed.record.event_kind !== "alert") continue;
      let payload: { event?: string; server_id?: string; tool?: string; changed_fields?: string[] };
      try {
        payload = JSON.parse(sealed.record.payload_summary);
      } catch {
        continue;
      }
      if (
        payload.event === "rugpull_alert" &&
        payload.server_id === request.server_id &&
        payload.tool === request.tool.name
      ) {
        return payload.changed_fields ?? [];
      }
    }
    return [];
  }

  /** Scanner findings anchored in the tool's description text, for inline highlight. */
  descriptionFindings(request: ApprovalRequestWire, alerts?: SealedWire[]): FindingWire[] {
    const found: FindingWire[] = [];
    for (const sealed of alerts ?? []) {
      if (sealed.record.server_id !== request.server_id) continue;
      if (sealed.record.tool !== request.tool.name) continue;
      for (const finding of sealed.record.findings) {
        if (finding.path && finding.path[0] === "description" && finding.span) {
          found.push(finding);
        }
      }
    }
    return found;
  }

  async submit(requestId: string, verdict: string): Promise<ApprovalRequestWire | null> {
    this.lastError = null;
    try {
      const resolved = await this.api.resolveApproval(requestId, verdict);
      this.approvals = this.approvals.filter((r) => r.request_id !== requestId);
      return resolved;
    } catch (err) {
      if (err instanceof AdminApiError) {
        this.lastError = `${err.status}: ${err.detail}`;
        return null;
      }
      throw err;
    }
  }

  render(ctx: ApprovalContext = {}): string {
    const rows = this.approvals.map((request) => {
      const kind = this.kindOf(request, ctx.registry);
      const changed = kind === "modified" ? this.changedFields(request, ctx.alerts) : [];
      const spans = this.descriptionFindings(request, ctx.alerts)
        .map((f) => f.span!)
        .filter(Boolean);
      const description = markSpans(request.tool.description ?? "", spans);
      const changeNote = changed.length
        ? `<span class="changed-fields">changed: ${changed.map(esc).join(", ")}</span>`
        : "";
      return `
      <tr class="approval" data-request-id="${esc(request.request_id)}">
        <td class="tool">
          <code>${esc(request.server_id)}.${esc(request.tool.name)}</code>
          ${badge(kind, kind.toUpperCase())} ${changeNote}
        </td>
        <td class="description">${description}</td>
        <td class="meta">first seen ${esc(request.first_seen)}<br>by ${esc(request.requested_by)}</td>
        <td class="actions">
          <button data-action="approve" data-request-id="${esc(request.request_id)}">approve</button>
          <button data-action="deny" data-request-id="${esc(request.request_id)}">deny</button>
          <button data-action="disable" data-request-id="${esc(request.request_id)}">disable</button>
        </td>
      </tr>`;
    });
    const error = this.lastError
      ? `<p class="api-error">${esc(this.lastError)}</p>`
      : "";
    if (!rows.length) {
      return `<section id="approvals"><h2>Approvals</h2>${error}<p class="empty">no pending approvals</p></section>`;
    }
    return `<section id="approvals"><h2>Approvals</h2>${error}
      <table><thead><tr><th>tool</th><th>description</th><th></th><th></th></tr></thead>
      <tbody>${rows.join("\n")}</tbody></table></section>`;
  }
}
