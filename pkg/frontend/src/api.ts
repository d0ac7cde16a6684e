// Hand-bound client for the control API (it is small enough to not deserve
// generated bindings).

import type { PolicyMap, ResolveDoc, RuleEntry, RulesDoc, EventRecord } from "./logic.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

export interface EventsPage {
  events: EventRecord[];
  latest: number;
}

// Same-origin by default (the console is served by the control listener).
let apiBase = "";

export function setApiBase(base: string): void {
  apiBase = base;
}

async function request<T>(method: string, path: string, body?: unknown): Promise<T> {
  const init: RequestInit = { method };
  if (body !== undefined) {
    init.headers = { "Content-Type": "application/json" };
    init.body = JSON.stringify(body);
  }
  const resp = await fetch(apiBase + path, init);
  const text = await resp.text();
  let doc: unknown = null;
  if (text) {
    try {
      doc = JSON.parse(text);
    } catch {
      doc = null;
    }
  }
  if (!resp.ok) {
    const message =
      doc && typeof doc === "object" && "error" in doc
        ? String((doc as { error: unknown }).error)
        : `${resp.status}`;
    throw new ApiError(resp.status, message);
  }
  return doc as T;
}

export function listRules(): Promise<RulesDoc> {
  return request("GET", "/api/rules");
}

export function putRule(pattern: string, policies: PolicyMap): Promise<RuleEntry> {
  return request("PUT", `/api/rules/${encodeURIComponent(pattern)}`, policies);
}

export function deleteRule(pattern: string): Promise<{ deleted: boolean }> {
  return request("DELETE", `/api/rules/${encodeURIComponent(pattern)}`);
}

export function resolveUrl(url: string): Promise<ResolveDoc> {
  return request("GET", `/api/resolve?url=${encodeURIComponent(url)}`);
}

export function pollEvents(since: number): Promise<EventsPage> {
  return request("GET", `/api/events?since=${since}`);
}
