import { AdminClient } from "./api.js";
import { esc, shortHash } from "./html.js";
import type { MetricsWire } from "./types.js";

/** Counter panel plus the published chain head auditors should record. */
export class MetricsPanel {
  data: MetricsWire | null = null;

  constructor(private readonly api: AdminClient) {}

  async refresh(): Promise<void> {
    this.data = await this.api.metrics();
  }

  render(): string {
    if (!this.data) {
      return `<section id="metrics"><h2>Metrics</h2><p class="empty">loading…</p></section>`;
    }
    const counters = Object.entries(this.data)
      .filter(([key, value]) => typeof value === "number" && key !== "head_hash")
      .map(([key, value]) => `<li><b>${esc(key)}</b> ${esc(value)}</li>`);
    return `<section id="metrics"><h2>Metrics</h2>
      <ul class="counters">${counters.join("\n")}</ul>
      <p class="head">chain head <code title="${esc(this.data.head_hash)}">${esc(shortHash(this.data.head_hash, 16))}</code></p>
      <p class="key">verify key <code>${esc(shortHash(this.data.public_key, 16))}</code></p>
    </section>`;
  }
}
