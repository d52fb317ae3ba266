import { AdminApiError, AdminClient } from "./api.js";
import { esc } from "./html.js";
import type { PolicyProblem } from "./types.js";

/**
 * Policy editor: shows the active document, accepts a replacement, and
 * surfaces the server's validation verdict. Validation happens server-side;
 * the console only checks that the upload parses as JSON at all.
 */
export class PolicyEditor {
  doc: unknown = null;
  problem: PolicyProblem | null = null;
  savedAt: string | null = null;

  constructor(private readonly api: AdminClient) {}

  async load(): Promise<void> {
    this.doc = await this.api.getPolicy();
  }

  async upload(text: string): Promise<boolean> {
    this.problem = null;
    this.savedAt = null;
    let parsed: unknown;
    try {
      parsed = JSON.parse(text);
    } catch (err) {
      this.problem = { path: "", message: `not JSON: ${(err as Error).message}` };
      return false;
    }
    try {
      await this.api.putPolicy(parsed);
    } catch (err) {
      if (err instanceof AdminApiError && err.status === 422) {
        const detail = (err.body as { error?: PolicyProblem }).error;
        this.problem = detail ?? { path: "", message: err.detail };
        return false;
      }
      throw err;
    }
    this.doc = parsed;
    this.savedAt = new Date().toISOString();
    return true;
  }

  render(): string {
    const problem = this.problem
      ? `<p class="policy-problem">rejected at <code>${esc(this.problem.path)}</code>: ${esc(this.problem.message)}</p>`
      : "";
    const saved = this.savedAt ? `<p class="policy-saved">saved ${esc(this.savedAt)}</p>` : "";
    const body = this.doc === null ? "" : esc(JSON.stringify(this.doc, null, 2));
    return `<section id="policy"><h2>Policy</h2>${problem}${saved}
      <textarea id="policy-doc" rows="16" spellcheck="false">${body}</textarea>
      <button data-action="policy-upload">upload</button></section>`;
  }
}
