/**
 * Console acceptance against a live gateway: a real Python gateway process
 * with a hostile ticket-server fixture behind it (see harness.py). The MCP
 * side of each scenario is driven with plain fetch, the admin side through
 * the console classes at their production polling cadence.
 */
import { ChildProcess, spawn } from "node:child_process";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { AdminClient } from "../src/api.js";
import { AdminConsole } from "../src/console.js";

interface HarnessInfo {
  mcp: string;
  admin: string;
  adminToken: string;
  userToken: string;
}

/** Minimal MCP host: JSON-RPC over Streamable HTTP with session adoption. */
class McpHost {
  session: string | null = null;
  private nextId = 0;

  constructor(
    private readonly url: string,
    private readonly token: string,
  ) {}

  async request(method: string, params: unknown = {}): Promise<any> {
    const headers: Record<string, string> = {
      Authorization: `Bearer ${this.token}`,
      "Content-Type": "application/json",
      Accept: "application/json, text/event-stream",
    };
    if (this.session) headers["Mcp-Session-Id"] = this.session;
    const res = await fetch(this.url, {
      method: "POST",
      headers,
      body: JSON.stringify({ jsonrpc: "2.0", id: ++this.nextId, method, params }),
    });
    const sid = res.headers.get("mcp-session-id");
    if (sid) this.session = sid;
    const text = await res.text();
    if ((res.headers.get("content-type") ?? "").startsWith("text/event-stream")) {
      const messages = text
        .split("\n\n")
        .map((block) =>
          block
            .split("\n")
            .filter((line) => line.startsWith("data: "))
            .map((line) => line.slice(6))
            .join(""),
        )
        .filter(Boolean)
        .map((data) => JSON.parse(data));
      return messages[messages.length - 1];
    }
    return text ? JSON.parse(text) : null;
  }

  initialize(): Promise<any> {
    return this.request("initialize", {
      protocolVersion: "2025-06-18",
      capabilities: {},
      clientInfo: { name: "console-e2e", version: "0" },
    });
  }

  call(name: string, args: unknown): Promise<any> {
    return this.request("tools/call", { name, arguments: args });
  }

  async tools(): Promise<string[]> {
    const reply = await this.request("tools/list", {});
    return (reply.result.tools as Array<{ name: string }>).map((t) => t.name).sort();
  }
}

const sleep = (ms: number) => new Promise((resolve) => setTimeout(resolve, ms));

let harness: ChildProcess;
let info: HarnessInfo;

beforeAll(async () => {
  const script = fileURLToPath(new URL("./harness.py", import.meta.url));
  harness = spawn("python3", [script], { stdio: ["pipe", "pipe", "inherit"] });
  info = await new Promise<HarnessInfo>((resolve, reject) => {
    let buffer = "";
    const timer = setTimeout(() => reject(new Error("harness did not report its URLs")), 30_000);
    harness.stdout!.on("data", (chunk: Buffer) => {
      buffer += chunk.toString("utf-8");
      const newline = buffer.indexOf("\n");
      if (newline >= 0) {
        clearTimeout(timer);
        resolve(JSON.parse(buffer.slice(0, newline)));
      }
    });
    harness.on("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`harness exited early with code ${code}`));
    });
  });
});

afterAll(async () => {
  harness.stdin?.end();
  await sleep(200);
  harness.kill("SIGTERM");
});

describe("console against a live gateway", () => {
  it("approval round trip: appears within 2 polls, verdict resolves, call then succeeds", async () => {
    const host = new McpHost(info.mcp, info.userToken);
    await host.initialize();
    // get_ticket hidden pending approval; helper's feedback tool withheld as poisoned
    expect(await host.tools()).toEqual(["helper.get_documentation", "tickets.list_tickets"]);

    const app = new AdminConsole(new AdminClient(info.admin, info.adminToken));
    app.start(); // real timers, production 2 s cadence

    const denied = await host.call("tickets.get_ticket", { ticket_id: "TICK-1001" });
    expect(denied.error.code).toBe(-32011);
    const requestId: string = denied.error.data.approval_request_id;
    expect(requestId).toBeTruthy();
    const deniedAt = Date.now();

    let appearedAt: number | null = null;
    while (Date.now() - deniedAt < 3 * app.poller.intervalMs) {
      if (app.approvals.approvals.some((r) => r.request_id === requestId)) {
        appearedAt = Date.now();
        break;
      }
      await sleep(50);
    }
    expect(appearedAt, "pending request never reached the console").not.toBeNull();
    expect(appearedAt! - deniedAt).toBeLessThanOrEqual(2 * app.poller.intervalMs);
    expect(app.render()).toContain(requestId);

    const resolved = await app.approvals.submit(requestId, "approved");
    expect(resolved?.state).toBe("approved");
    expect(app.approvals.render()).toContain("no pending approvals");

    const released = await host.call("tickets.get_ticket", { ticket_id: "TICK-1001" });
    app.stop();
    expect(released.error).toBeUndefined();
    expect(released.result.content[0].text).toContain("blank frame");
  });

  it("trace explorer: deny and alert visible, badge green, tampered export goes red at the seq", async () => {
    const host = new McpHost(info.mcp, info.userToken);
    await host.initialize();
    await host.tools();

    const clean = await host.call("helper.get_documentation", { topic: "requests" });
    expect(clean.result).toBeTruthy();
    // description-poisoned tool: the gate files an alert and denies the call
    const blocked = await host.call("helper.send_feedback", { feedback: "pagination looks off" });
    expect(blocked.error.code).toBe(-32014);
    expect(blocked.error.data.reason_code).toBe("INJECTION_SUSPECTED");

    const app = new AdminConsole(new AdminClient(info.admin, info.adminToken));
    await app.loadTrace({ session_id: host.session! });
    expect(app.trace.badge.state).toBe("green");
    const html = app.trace.render();
    expect(html).toContain("chain intact");
    expect(html).toContain('class="event-deny"');
    expect(html).toContain('class="event-alert"');
    expect(html).toContain("INJECTION_SUSPECTED");

    // a complete export, pinned to the published head, also verifies green
    const exported = await app.api.exportJsonl();
    const head = (await app.api.metrics()).head_hash;
    const intact = await app.trace.verifyExport(exported, head);
    expect(intact.ok).toBe(true);

    // flip one record's user attribution and re-verify
    const lines = exported.trimEnd().split("\n");
    const target = Math.floor(lines.length / 2);
    const doc = JSON.parse(lines[target]!);
    const brokenSeq: number = doc.record.seq;
    doc.record.user_id = "mallory";
    lines[target] = JSON.stringify(doc);
    const verdict = await app.trace.verifyExport(lines.join("\n"), head);

    expect(verdict.ok).toBe(false);
    expect(verdict.broken_at).toBe(brokenSeq);
    expect(app.trace.badge.state).toBe("red");
    expect(app.trace.render()).toContain(`chain broken at seq ${brokenSeq}`);
  });
});
