/**
 * Thin typed client for the debug service. Every helper resolves with
 * parsed JSON or rejects with ApiError; a connection failure surfaces as
 * status 0 so callers can tell "server unreachable" apart from a
 * structured error reply.
 */

import type {
  DiffPayload,
  ErrorGroup,
  ErrorReport,
  Progress,
  SaveResult,
  ServiceErrorBody,
} from "./types.js";

export class ApiError extends Error {
  status: number;
  body: ServiceErrorBody | null;

  constructor(status: number, body: ServiceErrorBody | null, message: string) {
    super(message);
    this.name = "ApiError";
    this.status = status;
    this.body = body;
  }
}

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  let res: Response;
  try {
    res = await fetch(path, init);
  } catch (err) {
    throw new ApiError(0, null, `cannot reach the debug service: ${String(err)}`);
  }
  let body: unknown = null;
  try {
    body = await res.json();
  } catch {
    // non-JSON reply; keep body null and fall through to the status check
  }
  if (!res.ok) {
    const eb = (body ?? null) as ServiceErrorBody | null;
    const msg = eb?.error?.message ?? `request failed with status ${res.status}`;
    throw new ApiError(res.status, eb, msg);
  }
  return body as T;
}

export function fetchProgress(): Promise<Progress> {
  return request<Progress>("/api/progress");
}

export function fetchErrors(): Promise<ErrorReport> {
  return request<ErrorReport>("/api/errors");
}

export function fetchErrorGroup(id: number): Promise<ErrorGroup> {
  return request<ErrorGroup>(`/api/errors/${id}`);
}

export function fetchDiff(universe: string): Promise<DiffPayload> {
  return request<DiffPayload>(`/api/diff?universe=${encodeURIComponent(universe)}`);
}

function postTemplate(path: string, text: string, version: string): Promise<SaveResult> {
  return request<SaveResult>(path, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({ text, version }),
  });
}

export function saveTemplate(text: string, version: string): Promise<SaveResult> {
  return postTemplate("/api/template", text, version);
}

export function saveAndCompile(text: string, version: string): Promise<SaveResult> {
  return postTemplate("/api/template/compile", text, version);
}
