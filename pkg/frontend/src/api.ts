// Typed client for the review service HTTP+JSON API.

import type {
  ActiveSelections,
  ApiErrorBody,
  InstanceFilters,
  InstancePage,
  InstanceView,
  JudgmentPayload,
  LabelPayload,
  SelectionPayload,
  ServiceMeta,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly field: string | null,
  ) {
    super(message);
  }
}

async function parseError(resp: Response): Promise<ApiError> {
  let body: ApiErrorBody = { code: "unknown", message: resp.statusText, field: null };
  try {
    body = (await resp.json()) as ApiErrorBody;
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(resp.status, body.code, body.message, body.field);
}

export function filtersToQuery(filters: InstanceFilters): URLSearchParams {
  const params = new URLSearchParams();
  if (filters.kind) params.set("kind", filters.kind);
  if (filters.labeled !== undefined) params.set("labeled", String(filters.labeled));
  if (filters.entity_count !== undefined) params.set("entity_count", String(filters.entity_count));
  if (filters.models?.length) params.set("models", filters.models.join(","));
  if (filters.templates?.length) params.set("templates", filters.templates.join(","));
  params.set("page", String(filters.page));
  params.set("page_size", String(filters.page_size));
  return params;
}

export class ReviewApi {
  constructor(readonly baseUrl: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(`${this.baseUrl}${path}`, init);
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as T;
  }

  meta(): Promise<ServiceMeta> {
    return this.request<ServiceMeta>("/meta");
  }

  listInstances(filters: InstanceFilters): Promise<InstancePage> {
    return this.request<InstancePage>(`/instances?${filtersToQuery(filters)}`);
  }

  getInstance(instanceId: string): Promise<InstanceView> {
    return this.request<InstanceView>(`/instances/${encodeURIComponent(instanceId)}`);
  }

  submitJudgment(payload: JudgmentPayload): Promise<{ judgment_id: string }> {
    return this.request("/judgments", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  submitSelection(payload: SelectionPayload): Promise<{ selection_id: string; family: string }> {
    return this.request("/selections", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  activeSelections(): Promise<ActiveSelections> {
    return this.request<ActiveSelections>("/selections/active");
  }

  submitLabel(payload: LabelPayload): Promise<{ instance_id: string; label: string }> {
    return this.request("/labels", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  async exportJournal(format: "jsonl" | "labels" | "instances" = "jsonl"): Promise<string> {
    const resp = await fetch(`${this.baseUrl}/export?format=${format}`);
    if (!resp.ok) throw await parseError(resp);
    return resp.text();
  }
}
