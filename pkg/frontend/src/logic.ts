// Pure console logic: types, option sets, validation, HTML rendering, and
// small state helpers. No DOM access here so everything is unit-testable.

export type Category = "cookies" | "images" | "javascript" | "popups" | "notifications";

export const CATEGORIES: Category[] = ["cookies", "images", "javascript", "popups", "notifications"];

export const CATEGORY_LABELS: Record<Category, string> = {
  cookies: "Cookies",
  images: "Images",
  javascript: "JavaScript",
  popups: "Popups",
  notifications: "Notifications",
};

export interface PolicyOption {
  value: string;
  label: string;
}

// Option labels are rendered with exactly these names.
export const OPTIONS: Record<Category, PolicyOption[]> = {
  cookies: [
    { value: "allow", label: "Allow" },
    { value: "session-only", label: "Session only" },
    { value: "block", label: "Block" },
  ],
  images: [
    { value: "allow", label: "Allow" },
    { value: "block", label: "Block" },
  ],
  javascript: [
    { value: "allow", label: "Allow" },
    { value: "block", label: "Block" },
  ],
  popups: [
    { value: "allow", label: "Allow" },
    { value: "block", label: "Block" },
  ],
  notifications: [
    { value: "allow", label: "Allow" },
    { value: "block", label: "Block" },
    { value: "ask", label: "Ask" },
  ],
};

export type PolicyMap = Partial<Record<Category, string>>;

export interface RuleEntry {
  pattern: string;
  policies: PolicyMap;
  modified_at: string;
}

export interface RulesDoc {
  version: number;
  default: Record<Category, string>;
  rules: RuleEntry[];
}

export interface ResolveDoc {
  url: string;
  effective: Record<Category, string>;
  provenance: Record<Category, string>;
}

export interface EventRecord {
  seq: number;
  timestamp: string;
  category: string;
  action: string;
  url: string;
  matched_pattern: string;
}

// ---------------------------------------------------------------------------
// Site-pattern validation, mirroring the server's rules; the server stays
// authoritative and its 422 messages win on disagreement.

const LABEL_RE = /^[a-z0-9]([a-z0-9-]*[a-z0-9])?$/;

export function validatePattern(raw: string): { ok: true; pattern: string } | { ok: false; error: string } {
  const text = raw.toLowerCase();
  if (!text) return { ok: false, error: "pattern must not be empty" };
  if (/\s/.test(text)) return { ok: false, error: "pattern must not contain whitespace" };
  if (text.includes("://")) return { ok: false, error: "pattern must not contain a URL scheme" };
  if (text.includes("/")) return { ok: false, error: "pattern must not contain a path" };
  if (text.includes(":")) return { ok: false, error: "pattern must not contain a port" };
  if (text === "*") return { ok: true, pattern: "*" };
  const host = text.startsWith("*.") ? text.slice(2) : text;
  if (host.includes("*")) {
    return { ok: false, error: "wildcard is only allowed as the entire leftmost label" };
  }
  if (!host) return { ok: false, error: "pattern must name a host" };
  for (const label of host.split(".")) {
    if (!label) return { ok: false, error: `empty label in "${host}"` };
    if (!LABEL_RE.test(label) && !/^[^\x00-\x7F]/.test(label)) {
      return { ok: false, error: `invalid label "${label}"` };
    }
  }
  return { ok: true, pattern: text };
}

// ---------------------------------------------------------------------------
// Rendering (plain strings; the DOM layer assigns innerHTML).

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

export function selectionFor(rule: RuleEntry, defaults: Record<Category, string>, category: Category): string {
  return rule.policies[category] ?? defaults[category];
}

function renderSelect(pattern: string, category: Category, selected: string, disabled = false): string {
  const options = OPTIONS[category]
    .map(
      (o) =>
        `<option value="${o.value}"${o.value === selected ? " selected" : ""}>${o.label}</option>`,
    )
    .join("");
  const attrs = disabled ? " disabled" : "";
  return (
    `<select class="policy" data-pattern="${escapeHtml(pattern)}" ` +
    `data-category="${category}"${attrs}>${options}</select>`
  );
}

export function renderBaselineRow(defaults: Record<Category, string>): string {
  const cells = CATEGORIES.map((c) => `<td>${renderSelect("", c, defaults[c], true)}</td>`).join("");
  return `<tr class="baseline"><td><em>baseline (all sites)</em></td>${cells}<td></td></tr>`;
}

export function renderRuleRow(rule: RuleEntry, defaults: Record<Category, string>): string {
  const cells = CATEGORIES.map(
    (c) => `<td>${renderSelect(rule.pattern, c, selectionFor(rule, defaults, c))}</td>`,
  ).join("");
  const del = `<button class="delete" data-pattern="${escapeHtml(rule.pattern)}">delete</button>`;
  return `<tr data-pattern="${escapeHtml(rule.pattern)}"><td class="pattern">${escapeHtml(
    rule.pattern,
  )}</td>${cells}<td>${del}</td></tr>`;
}

export function renderRuleTable(doc: RulesDoc): string {
  const head =
    "<tr><th>Site</th>" +
    CATEGORIES.map((c) => `<th>${CATEGORY_LABELS[c]}</th>`).join("") +
    "<th></th></tr>";
  const rows = doc.rules.map((r) => renderRuleRow(r, doc.default)).join("");
  return `<table>${head}${renderBaselineRow(doc.default)}${rows}</table>`;
}

export function renderResolveResult(doc: ResolveDoc): string {
  const rows = CATEGORIES.map(
    (c) =>
      `<tr><td>${CATEGORY_LABELS[c]}</td><td>${escapeHtml(doc.effective[c])}</td>` +
      `<td>${escapeHtml(doc.provenance[c])}</td></tr>`,
  ).join("");
  return (
    `<p>${escapeHtml(doc.url)}</p>` +
    `<table><tr><th>Category</th><th>Policy</th><th>From</th></tr>${rows}</table>`
  );
}

export function hostPatternForEvent(url: string): string | null {
  try {
    const host = new URL(url).hostname;
    return host || null;
  } catch {
    return null;
  }
}

export function renderEventItem(e: EventRecord): string {
  const wouldAsk = e.action === "would-ask";
  const cls = wouldAsk ? "event would-ask" : "event";
  const convert = wouldAsk
    ? ` <button class="convert" data-url="${escapeHtml(e.url)}" data-value="allow">Allow</button>` +
      `<button class="convert" data-url="${escapeHtml(e.url)}" data-value="block">Block</button>`
    : "";
  return (
    `<li class="${cls}" data-seq="${e.seq}">` +
    `<span class="ts">${escapeHtml(e.timestamp)}</span> ` +
    `<span class="cat">${escapeHtml(e.category)}</span> ` +
    `<span class="action">${escapeHtml(e.action)}</span> ` +
    `<span class="url">${escapeHtml(e.url)}</span> ` +
    `<span class="pattern">(${escapeHtml(e.matched_pattern)})</span>${convert}</li>`
  );
}

export function renderEvents(events: EventRecord[]): string {
  return events.map(renderEventItem).join("");
}

// ---------------------------------------------------------------------------
// Event feed state: newest first, deduplicated by seq, bounded.

export function insertNewestFirst(
  existing: EventRecord[],
  incoming: EventRecord[],
  cap = 200,
): EventRecord[] {
  const seen = new Set(existing.map((e) => e.seq));
  const fresh = incoming.filter((e) => !seen.has(e.seq));
  const merged = [...fresh, ...existing];
  merged.sort((a, b) => b.seq - a.seq);
  return merged.slice(0, cap);
}

// ---------------------------------------------------------------------------
// Per-key serialization so edits to one pattern queue behind each other.

export class KeyedQueue {
  private tails = new Map<string, Promise<unknown>>();

  run<T>(key: string, fn: () => Promise<T>): Promise<T> {
    const tail = this.tails.get(key) ?? Promise.resolve();
    const next = tail.then(fn, fn);
    this.tails.set(
      key,
      next.catch(() => undefined),
    );
    return next;
  }
}
