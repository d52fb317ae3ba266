import { AdminClient } from "./api.js";
import { badge, esc } from "./html.js";
import type { SealedWire } from "./types.js";

const FEED_LIMIT = 500;

/**
 * Alert feed: accumulates alert records across polls (the "live" part) while
 * keeping everything fetched so far as scrollback history.
 */
export class AlertFeed {
  items: SealedWire[] = [];
  private lastSeq = -1;

  constructor(private readonly api: AdminClient) {}

  async refresh(): Promise<void> {
    const page = await this.api.alerts(this.lastSeq);
    for (const sealed of page.alerts) {
      this.items.push(sealed);
      if (sealed.record.seq > this.lastSeq) this.lastSeq = sealed.record.seq;
    }
    if (this.items.length > FEED_LIMIT) {
      this.items = this.items.slice(this.items.length - FEED_LIMIT);
    }
  }

  render(): string {
    if (!this.items.length) {
      return `<section id="alerts"><h2>Alerts</h2><p class="empty">no alerts</p></section>`;
    }
    const rows = [...this.items]
      .reverse()
      .map((sealed) => {
        const r = sealed.record;
        const classes = r.findings.map((f) => f.class);
        const tags = classes.length
          ? classes.map((c) => badge(`finding-${c}`, c)).join(" ")
          : "";
        const where = [r.server_id, r.tool].filter(Boolean).join(".");
        return `<li class="alert" data-seq="${r.seq}">
          <time>${esc(r.timestamp)}</time>
          <code>${esc(where || r.session_id)}</code> ${tags}
          <span class="summary">${esc(r.payload_summary)}</span>
        </li>`;
      });
    return `<section id="alerts"><h2>Alerts</h2><ul class="feed">${rows.join("\n")}</ul></section>`;
  }
}
