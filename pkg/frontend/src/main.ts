// DOM wiring for the console: server state is the single source of truth;
// every edit round-trips through the API and re-renders from the response.

import {
  Category,
  EventRecord,
  KeyedQueue,
  RulesDoc,
  hostPatternForEvent,
  insertNewestFirst,
  renderEvents,
  renderResolveResult,
  renderRuleTable,
  validatePattern,
} from "./logic.js";
import { ApiError, deleteRule, listRules, pollEvents, putRule, resolveUrl } from "./api.js";

let rulesDoc: RulesDoc | null = null;
let feed: EventRecord[] = [];
const editQueue = new KeyedQueue();

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function setStatus(message: string, isError = false) {
  const status = el<HTMLElement>("status");
  status.textContent = message;
  status.className = isError ? "error" : "ok";
}

async function refreshRules() {
  rulesDoc = await listRules();
  el("rules").innerHTML = renderRuleTable(rulesDoc);
}

function applyRuleUpdate(pattern: string, entry: { pattern: string; policies: Record<string, string> }) {
  if (!rulesDoc) return;
  const existing = rulesDoc.rules.find((r) => r.pattern === pattern);
  if (existing) {
    existing.policies = entry.policies;
  } else {
    rulesDoc.rules.push({ pattern: entry.pattern, policies: entry.policies, modified_at: "" });
    rulesDoc.rules.sort((a, b) => (a.pattern < b.pattern ? -1 : 1));
  }
  el("rules").innerHTML = renderRuleTable(rulesDoc);
}

function onPolicyChange(select: HTMLSelectElement) {
  const pattern = select.dataset.pattern!;
  const category = select.dataset.category as Category;
  const value = select.value;
  const previous = rulesDoc?.rules.find((r) => r.pattern === pattern)?.policies[category];
  select.classList.add("dirty");
  editQueue
    .run(pattern, () => putRule(pattern, { [category]: value }))
    .then((entry) => {
      applyRuleUpdate(pattern, entry as { pattern: string; policies: Record<string, string> });
      setStatus(`saved ${pattern}`);
    })
    .catch((err) => {
      // revert the control and surface the server's field locus
      if (previous !== undefined) select.value = previous;
      else if (rulesDoc) select.value = rulesDoc.default[category];
      select.classList.remove("dirty");
      setStatus(err instanceof ApiError ? err.message : String(err), true);
    });
}

function onDelete(pattern: string) {
  editQueue
    .run(pattern, () => deleteRule(pattern))
    .then(() => refreshRules())
    .then(() => setStatus(`deleted ${pattern}`))
    .catch((err) => setStatus(String(err), true));
}

function onAddSite() {
  const input = el<HTMLInputElement>("add-pattern");
  const verdict = validatePattern(input.value.trim());
  if (!verdict.ok) {
    setStatus(verdict.error, true);
    return;
  }
  editQueue
    .run(verdict.pattern, () => putRule(verdict.pattern, {}))
    .then(() => refreshRules())
    .then(() => {
      input.value = "";
      setStatus(`added ${verdict.pattern}`);
    })
    .catch((err) => setStatus(err instanceof ApiError ? err.message : String(err), true));
}

async function onResolvePreview() {
  const input = el<HTMLInputElement>("resolve-url");
  try {
    const doc = await resolveUrl(input.value.trim());
    el("resolve-result").innerHTML = renderResolveResult(doc);
  } catch (err) {
    el("resolve-result").innerHTML = "";
    setStatus(err instanceof ApiError ? err.message : String(err), true);
  }
}

function onConvertWouldAsk(url: string, value: string) {
  const pattern = hostPatternForEvent(url);
  if (!pattern) {
    setStatus(`cannot derive a site from ${url}`, true);
    return;
  }
  editQueue
    .run(pattern, () => putRule(pattern, { notifications: value }))
    .then(() => refreshRules())
    .then(() => setStatus(`${pattern}: notifications set to ${value}`))
    .catch((err) => setStatus(String(err), true));
}

async function eventLoop() {
  let cursor = 0;
  for (;;) {
    try {
      const page = await pollEvents(cursor); // server long-polls up to 30 s
      cursor = page.latest;
      if (page.events.length) {
        feed = insertNewestFirst(feed, page.events);
        el("events").innerHTML = renderEvents(feed);
      }
    } catch {
      await new Promise((r) => setTimeout(r, 2000));
    }
  }
}

function bind() {
  el("rules").addEventListener("change", (ev) => {
    const target = ev.target as HTMLElement;
    if (target instanceof HTMLSelectElement && target.classList.contains("policy")) {
      onPolicyChange(target);
    }
  });
  el("rules").addEventListener("click", (ev) => {
    const target = ev.target as HTMLElement;
    if (target instanceof HTMLButtonElement && target.classList.contains("delete")) {
      onDelete(target.dataset.pattern!);
    }
  });
  el("add-site").addEventListener("submit", (ev) => {
    ev.preventDefault();
    onAddSite();
  });
  el("resolve-form").addEventListener("submit", (ev) => {
    ev.preventDefault();
    void onResolvePreview();
  });
  el("events").addEventListener("click", (ev) => {
    const target = ev.target as HTMLElement;
    if (target instanceof HTMLButtonElement && target.classList.contains("convert")) {
      onConvertWouldAsk(target.dataset.url!, target.dataset.value!);
    }
  });
}

async function init() {
  bind();
  try {
    await refreshRules();
    setStatus("connected");
  } catch (err) {
    setStatus(`cannot load rules: ${err}`, true);
  }
  void eventLoop();
}

if (typeof document !== "undefined" && document.getElementById("rules")) {
  void init();
} else if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", () => void init());
}
