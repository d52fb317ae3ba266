import { AdminClient } from "./api.js";
import { badge, esc, shortHash } from "./html.js";
import type { ProvenanceFilters, SealedWire, VerifyWire } from "./types.js";

export interface ChainBadge {
  state: "green" | "red" | "unknown";
  brokenAt?: number;
  cause?: string;
  records?: number;
}

/** CSS class per event, keyed by kind and (for decisions) outcome. */
function eventClass(sealed: SealedWire): string {
  const r = sealed.record;
  if (r.event_kind === "decision") {
    return r.decision?.outcome === "deny" ? "event-deny" : "event-allow";
  }
  if (r.event_kind === "alert") return "event-alert";
  return `event-${r.event_kind}`;
}

/**
 * Provenance explorer: filterable record pages rendered as a chronological
 * timeline, plus a chain-verification badge. The badge goes green only when
 * the verify endpoint says the chain holds; a tampered export turns it red
 * at the sequence number the verifier reports.
 */
export class TraceExplorer {
  records: SealedWire[] = [];
  nextAfterSeq: number | null = null;
  badge: ChainBadge = { state: "unknown" };
  filters: ProvenanceFilters = {};

  constructor(private readonly api: AdminClient) {}

  async load(filters: ProvenanceFilters = {}): Promise<void> {
    this.filters = filters;
    const page = await this.api.provenance(filters);
    this.records = page.records;
    this.nextAfterSeq = page.next_after_seq;
    this.applyVerdict(await this.api.verify());
  }

  /** Verify an exported JSONL log (optionally pinned to a published head). */
  async verifyExport(exportText: string, expectedHead?: string): Promise<VerifyWire> {
    const verdict = await this.api.verify(exportText, expectedHead);
    this.applyVerdict(verdict);
    return verdict;
  }

  private applyVerdict(verdict: VerifyWire): void {
    this.badge = verdict.ok
      ? { state: "green", records: verdict.records }
      : { state: "red", brokenAt: verdict.broken_at, cause: verdict.cause, records: verdict.records };
  }

  renderBadge(): string {
    if (this.badge.state === "green") {
      return badge("chain-ok", `chain intact (${this.badge.records ?? this.records.length} records)`);
    }
    if (this.badge.state === "red") {
      return badge("chain-broken", `chain broken at seq ${this.badge.brokenAt} (${this.badge.cause})`);
    }
    return badge("chain-unknown", "chain unverified");
  }

  render(): string {
    const head = `<header>${this.renderBadge()}</header>`;
    if (!this.records.length) {
      return `<section id="trace"><h2>Provenance</h2>${head}<p class="empty">no records match the current filter</p></section>`;
    }
    const rows = this.records.map((sealed) => {
      const r = sealed.record;
      const outcome =
        r.event_kind === "decision"
          ? badge(
              r.decision?.outcome === "deny" ? "deny" : "allow",
              `${r.decision?.outcome ?? "?"}${r.decision?.reason_code ? " " + r.decision.reason_code : ""}`,
            )
          : r.event_kind === "alert"
            ? badge("alert", "alert")
            : "";
      const findings = r.findings
        .map((f) => `<span class="finding">${esc(f.class)}/${esc(f.subclass)}</span>`)
        .join(" ");
      const where = [r.server_id, r.tool].filter(Boolean).join(".");
      return `<li class="${eventClass(sealed)}" data-seq="${r.seq}">
        <span class="seq">#${r.seq}</span>
        <time>${esc(r.timestamp)}</time>
        <span class="kind">${esc(r.event_kind)}</span>
        <code>${esc(where)}</code>
        ${outcome} ${findings}
        <span class="summary">${esc(r.payload_summary)}</span>
        <span class="hash" title="${esc(sealed.chain_hash)}">${esc(shortHash(sealed.chain_hash))}</span>
      </li>`;
    });
    const more =
      this.nextAfterSeq !== null
        ? `<button data-action="trace-more" data-after-seq="${this.nextAfterSeq}">more</button>`
        : "";
    return `<section id="trace"><h2>Provenance</h2>${head}
      <ol class="timeline">${rows.join("\n")}</ol>${more}</section>`;
  }
}
