import { AdminClient } from "./api.js";
import { AlertFeed } from "./alerts.js";
import { ApprovalsView } from "./approvals.js";
import { MetricsPanel } from "./metrics.js";
import { PolicyEditor } from "./policy.js";
import { DEFAULT_INTERVAL_MS, Poller, TimerHost } from "./poller.js";
import { TraceExplorer } from "./trace.js";
import type { ProvenanceFilters, RegistryWire } from "./types.js";

/**
 * The whole console: one client, five panels, one poll loop. All state is a
 * projection of admin API responses; the only writes are approval verdicts
 * and policy uploads, each a single API call.
 */
export class AdminConsole {
  readonly approvals: ApprovalsView;
  readonly alerts: AlertFeed;
  readonly trace: TraceExplorer;
  readonly policy: PolicyEditor;
  readonly metrics: MetricsPanel;
  readonly poller: Poller;
  registry: RegistryWire | null = null;
  lastPollError: string | null = null;

  constructor(
    readonly api: AdminClient,
    intervalMs: number = DEFAULT_INTERVAL_MS,
    timers?: TimerHost,
  ) {
    this.approvals = new ApprovalsView(api);
    this.alerts = new AlertFeed(api);
    this.trace = new TraceExplorer(api);
    this.policy = new PolicyEditor(api);
    this.metrics = new MetricsPanel(api);
    this.poller = new Poller(() => this.tick(), intervalMs, timers);
  }

  /** One refresh cycle: reads only. */
  async tick(): Promise<void> {
    try {
      await this.approvals.refresh();
      await this.alerts.refresh();
      this.registry = await this.api.registry();
      await this.metrics.refresh();
      this.lastPollError = null;
    } catch (err) {
      this.lastPollError = err instanceof Error ? err.message : String(err);
    }
  }

  start(): void {
    this.poller.start();
  }

  stop(): void {
    this.poller.stop();
  }

  async loadTrace(filters: ProvenanceFilters = {}): Promise<void> {
    await this.trace.load(filters);
  }

  /** Dispatch for data-action buttons; main.ts wires DOM events to this. */
  async handleAction(action: string, dataset: Record<string, string | undefined>): Promise<void> {
    switch (action) {
      case "approve":
      case "deny":
      case "disable": {
        const requestId = dataset.requestId ?? "";
        const verdictByAction: Record<string, string> = {
          approve: "approved",
          deny: "denied",
          disable: "disabled",
        };
        await this.approvals.submit(requestId, verdictByAction[action]!);
        break;
      }
      case "policy-upload":
        await this.policy.upload(dataset.document ?? "");
        break;
      case "trace-more":
        await this.loadTrace({
          ...this.trace.filters,
          after_seq: Number(dataset.afterSeq ?? -1),
        });
        break;
      default:
        break;
    }
  }

  render(): string {
    const pollError = this.lastPollError
      ? `<p class="poll-error">poll failed: ${this.lastPollError}</p>`
      : "";
    return `<main class="console">
${pollError}
${this.approvals.render({ registry: this.registry ?? undefined, alerts: this.alerts.items })}
${this.alerts.render()}
${this.trace.render()}
${this.policy.render()}
${this.metrics.render()}
</main>`;
  }
}
