// Session state: annotator identity, URL-encoded filters, the pending
// (unsubmitted) judgment, and progress counters.
//
// Two invariants live here rather than in the views:
//  * only tokens that were actually displayed can enter a judgment, and
//  * a pending judgment is never dropped silently - navigation must go
//    through guardNavigation(), which asks for confirmation.

import type { InstanceFilters, Rating } from "./types.js";

export interface PendingJudgment {
  instanceId: string;
  modelId: string;
  templateId: string;
  shownTokens: string[];
  selected: Set<string>;
  rating: Rating | null;
}

export const DEFAULT_PAGE_SIZE = 20;

export function filtersFromUrl(search: string): InstanceFilters {
  const params = new URLSearchParams(search);
  const filters: InstanceFilters = {
    page: Number(params.get("page") ?? "1") || 1,
    page_size: Number(params.get("page_size") ?? String(DEFAULT_PAGE_SIZE)) || DEFAULT_PAGE_SIZE,
  };
  const kind = params.get("kind");
  if (kind === "pair" || kind === "anaphoric") filters.kind = kind;
  const labeled = params.get("labeled");
  if (labeled === "true" || labeled === "false") filters.labeled = labeled === "true";
  const entityCount = params.get("entity_count");
  if (entityCount !== null && entityCount !== "") filters.entity_count = Number(entityCount);
  const models = params.get("models");
  if (models) filters.models = models.split(",").filter(Boolean);
  const templates = params.get("templates");
  if (templates) filters.templates = templates.split(",").filter(Boolean);
  return filters;
}

export function filtersToUrl(filters: InstanceFilters): string {
  const params = new URLSearchParams();
  if (filters.kind) params.set("kind", filters.kind);
  if (filters.labeled !== undefined) params.set("labeled", String(filters.labeled));
  if (filters.entity_count !== undefined) params.set("entity_count", String(filters.entity_count));
  if (filters.models?.length) params.set("models", filters.models.join(","));
  if (filters.templates?.length) params.set("templates", filters.templates.join(","));
  params.set("page", String(filters.page));
  params.set("page_size", String(filters.page_size));
  return `?${params.toString()}`;
}

export class SessionState {
  annotatorId = "";
  filters: InstanceFilters = { page: 1, page_size: DEFAULT_PAGE_SIZE };
  pending: PendingJudgment | null = null;
  labeledCount = 0;
  totalCount = 0;

  constructor(annotatorId = "", search = "") {
    this.annotatorId = annotatorId;
    if (search) this.filters = filtersFromUrl(search);
  }

  beginJudgment(
    instanceId: string,
    modelId: string,
    templateId: string,
    shownTokens: string[],
  ): PendingJudgment {
    this.pending = {
      instanceId,
      modelId,
      templateId,
      shownTokens: [...shownTokens],
      selected: new Set(),
      rating: null,
    };
    return this.pending;
  }

  /** Toggle a token in the pending selection; ignores tokens that were
   * never displayed (the service would reject them anyway). */
  toggleToken(token: string): boolean {
    if (!this.pending || !this.pending.shownTokens.includes(token)) return false;
    if (this.pending.selected.has(token)) {
      this.pending.selected.delete(token);
    } else {
      this.pending.selected.add(token);
    }
    return true;
  }

  setRating(rating: Rating): void {
    if (this.pending) this.pending.rating = rating;
  }

  hasPendingWork(): boolean {
    return this.pending !== null && (this.pending.selected.size > 0 || this.pending.rating !== null);
  }

  /** Returns true when navigation may proceed. ``confirmDiscard`` is asked
   * only when unsubmitted work would be lost. */
  guardNavigation(confirmDiscard: () => boolean): boolean {
    if (!this.hasPendingWork()) {
      this.pending = null;
      return true;
    }
    if (confirmDiscard()) {
      this.pending = null;
      return true;
    }
    return false;
  }

  takeSubmittable(): { selected_tokens: string[]; rating: Rating } | null {
    if (!this.pending || this.pending.rating === null) return null;
    const payload = {
      selected_tokens: [...this.pending.selected],
      rating: this.pending.rating,
    };
    return payload;
  }

  clearPending(): void {
    this.pending = null;
  }

  recordProgress(labeled: number, total: number): void {
    this.labeledCount = labeled;
    this.totalCount = total;
  }

  progressText(): string {
    return `${this.labeledCount} / ${this.totalCount} labeled`;
  }
}
