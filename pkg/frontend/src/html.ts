/** Tiny HTML-string helpers shared by the view classes. */

export function esc(value: unknown): string {
  return String(value ?? "")
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

export function badge(cls: string, label: string): string {
  return `<span class="badge ${esc(cls)}">${esc(label)}</span>`;
}

/**
 * Escape `text` while wrapping each [start, end) span in <mark>.
 * Spans are offsets into the raw text, so escaping happens per segment.
 */
export function markSpans(text: string, spans: Array<[number, number]>): string {
  const ordered = [...spans]
    .filter(([a, b]) => a >= 0 && b > a && a < text.length)
    .sort((x, y) => x[0] - y[0]);
  const parts: string[] = [];
  let cursor = 0;
  for (const [start, rawEnd] of ordered) {
    if (start < cursor) continue; // overlapping span already covered
    const end = Math.min(rawEnd, text.length);
    parts.push(esc(text.slice(cursor, start)));
    parts.push(`<mark>${esc(text.slice(start, end))}</mark>`);
    cursor = end;
  }
  parts.push(esc(text.slice(cursor)));
  return parts.join("");
}

export function shortHash(hash: string | undefined | null, keep = 12): string {
  if (!hash) return "—";
  return hash.length <= keep ? hash : `${hash.slice(0, keep)}…`;
}
