export type TimerHost = {
  setInterval: (fn: () => void, ms: number) => unknown;
  clearInterval: (handle: unknown) => void;
};

export const DEFAULT_INTERVAL_MS = 2000;

/**
 * Fixed-cadence refresh driver. Fires once immediately on start, then every
 * interval; a tick still in flight makes the next one a no-op instead of
 * stacking requests. Timers are injected so tests can advance time by hand.
 */
export class Poller {
  private handle: unknown = null;
  private inFlight = false;
  ticks = 0;

  constructor(
    private readonly tick: () => Promise<void>,
    readonly intervalMs: number = DEFAULT_INTERVAL_MS,
    private readonly timers: TimerHost = globalThis as unknown as TimerHost,
  ) {}

  start(): void {
    if (this.handle !== null) return;
    void this.fire();
    this.handle = this.timers.setInterval(() => void this.fire(), this.intervalMs);
  }

  stop(): void {
    if (this.handle !== null) {
      this.timers.clearInterval(this.handle);
      this.handle = null;
    }
  }

  get running(): boolean {
    return this.handle !== null;
  }

  private async fire(): Promise<void> {
    if (this.inFlight) return;
    this.inFlight = true;
    try {
      await this.tick();
      this.ticks += 1;
    } finally {
      this.inFlight = false;
    }
  }
}
