// App bootstrap: list pane, comparison board, keyboard-first judging flow.
//
// Keys: j/k next/previous instance · Tab cycles prediction columns ·
// 1..9 toggles the nth shown token in the active column · a/g/i sets the
// rating · Enter submits the judgment · Shift+1..9 assigns the nth gold
// label. Filters live entirely in the URL, so reloading reproduces the view.

import { ApiError, ReviewApi } from "./api.js";
import { DEFAULT_PAGE_SIZE, SessionState, filtersToUrl } from "./state.js";
import type { InstancePage, InstanceView, PredictionColumn, Rating, ServiceMeta } from "./types.js";
import { renderComparison, renderError } from "./views.js";

const RATING_KEYS: Record<string, Rating> = { a: "accurate", g: "generic", i: "irrelevant" };

class App {
  api: ReviewApi;
  state: SessionState;
  meta: ServiceMeta | null = null;
  page: InstancePage | null = null;
  current: InstanceView | null = null;
  activeColumnIndex = 0;

  listPane: HTMLElement;
  detailPane: HTMLElement;
  statusBar: HTMLElement;

  constructor(root: HTMLElement, api: ReviewApi) {
    this.api = api;
    const stored = window.localStorage.getItem("annotator_id") ?? "";
    const annotator = stored || window.prompt("annotator id?") || "anonymous";
    window.localStorage.setItem("annotator_id", annotator);
    this.state = new SessionState(annotator, window.location.search);

    root.innerHTML = "";
    const layout = document.createElement("div");
    layout.className = "layout";
    this.listPane = document.createElement("nav");
    this.listPane.className = "list-pane";
    this.detailPane = document.createElement("main");
    this.detailPane.className = "detail-pane";
    this.statusBar = document.createElement("footer");
    this.statusBar.className = "status-bar";
    layout.append(this.listPane, this.detailPane);
    root.append(layout, this.statusBar);

    window.addEventListener("beforeunload", (event) => {
      if (this.state.hasPendingWork()) event.preventDefault();
    });
    window.addEventListener("keydown", (event) => this.onKey(event));
    window.addEventListener("popstate", () => {
      this.state = new SessionState(this.state.annotatorId, window.location.search);
      void this.refresh();
    });
  }

  async refresh(): Promise<void> {
    this.meta = await this.api.meta();
    this.page = await this.api.listInstances(this.state.filters);
    const labeled = this.page.items.filter((item) => item.gold_label !== null).length;
    this.state.recordProgress(labeled, this.page.total);
    this.renderList();
    const first = this.page.items[0];
    if (first) await this.select(first.instance_id, { skipGuard: true });
    this.renderStatus();
  }

  renderList(): void {
    this.listPane.innerHTML = "";
    if (!this.page) return;
    for (const item of this.page.items) {
      const entry = document.createElement("button");
      entry.type = "button";
      entry.className = "list-entry";
      entry.dataset.instanceId = item.instance_id;
      entry.textContent = `${item.kind === "anaphoric" ? "◦" : "•"} ${item.instance_id}`;
      if (item.gold_label) entry.textContent += ` [${item.gold_label}]`;
      if (item.judged) entry.textContent += " ✓";
      entry.addEventListener("click", () => void this.select(item.instance_id));
      this.listPane.appendChild(entry);
    }
  }

  async select(instanceId: string, opts: { skipGuard?: boolean } = {}): Promise<void> {
    if (!opts.skipGuard && !this.state.guardNavigation(() =>
      window.confirm("Discard the unsubmitted judgment?"))) {
      return;
    }
    this.current = await this.api.getInstance(instanceId);
    this.activeColumnIndex = 0;
    this.renderDetail();
  }

  expectedColumns(): Array<{ model_id: string; template_id: string }> {
    if (!this.meta || !this.current) return [];
    const templates = this.state.filters.templates ?? this.meta.templates;
    const models = this.state.filters.models ?? this.meta.models;
    const relevant = this.current.predictions.length
      ? new Set(this.current.predictions.map((c) => c.template_id))
      : new Set(templates);
    return models.flatMap((model_id) =>
      templates
        .filter((t) => relevant.has(t))
        .map((template_id) => ({ model_id, template_id })),
    );
  }

  renderDetail(): void {
    this.detailPane.innerHTML = "";
    if (!this.current) return;
    const board = renderComparison(this.current, {
      expectedColumns: this.expectedColumns(),
      onToggleToken: (column, token, button) => this.toggleToken(column, token, button),
    });
    this.detailPane.appendChild(board);
    this.detailPane.appendChild(this.renderControls());
    this.highlightActiveColumn();
  }

  renderControls(): HTMLElement {
    const controls = document.createElement("div");
    controls.className = "controls";
    for (const [key, rating] of Object.entries(RATING_KEYS)) {
      const button = document.createElement("button");
      button.type = "button";
      button.className = "rating";
      button.dataset.rating = rating;
      button.textContent = `${rating} (${key})`;
      button.addEventListener("click", () => this.state.setRating(rating));
      controls.appendChild(button);
    }
    const submit = document.createElement("button");
    submit.type = "button";
    submit.className = "submit";
    submit.textContent = "submit judgment (Enter)";
    submit.addEventListener("click", () => void this.submitJudgment());
    controls.appendChild(submit);

    for (const [index, label] of (this.meta?.label_set ?? []).entries()) {
      const button = document.createElement("button");
      button.type = "button";
      button.className = "label";
      button.dataset.label = label;
      button.textContent = `label: ${label} (Shift+${index + 1})`;
      button.addEventListener("click", () => void this.submitLabel(label));
      controls.appendChild(button);
    }
    controls.appendChild(this.renderSelectionControls());
    return controls;
  }

  renderSelectionControls(): HTMLElement {
    const form = document.createElement("span");
    form.className = "selection-controls";
    const family = document.createElement("select");
    family.className = "family";
    for (const value of ["bert_like", "roberta_like"]) {
      const option = document.createElement("option");
      option.value = value;
      option.textContent = value;
      family.appendChild(option);
    }
    const model = document.createElement("select");
    model.className = "model";
    for (const value of this.meta?.models ?? []) {
      const option = document.createElement("option");
      option.value = value;
      option.textContent = value;
      model.appendChild(option);
    }
    const button = document.createElement("button");
    button.type = "button";
    button.className = "select-model";
    button.textContent = "advance model to extraction";
    button.addEventListener("click", () => void this.submitSelection(
      family.value as "bert_like" | "roberta_like",
      model.value,
    ));
    form.append(family, model, button);
    return form;
  }

  async submitSelection(family: "bert_like" | "roberta_like", modelId: string): Promise<void> {
    try {
      await this.api.submitSelection({
        family,
        model_id: modelId,
        annotator_id: this.state.annotatorId,
      });
      this.renderStatus(`active ${family}: ${modelId}`);
    } catch (error) {
      this.showError(error);
    }
  }

  columns(): PredictionColumn[] {
    return this.current?.predictions ?? [];
  }

  activeColumn(): PredictionColumn | null {
    return this.columns()[this.activeColumnIndex] ?? null;
  }

  highlightActiveColumn(): void {
    const sections = this.detailPane.querySelectorAll<HTMLElement>("section.column");
    sections.forEach((section) => section.classList.remove("active"));
    const active = this.activeColumn();
    if (!active) return;
    for (const section of sections) {
      if (
        section.dataset.modelId === active.model_id &&
        section.dataset.templateId === active.template_id
      ) {
        section.classList.add("active");
      }
    }
  }

  toggleToken(column: PredictionColumn, token: string, button: HTMLButtonElement): void {
    if (!this.current) return;
    const pending = this.state.pending;
    const sameColumn =
      pending &&
      pending.instanceId === this.current.instance_id &&
      pending.modelId === column.model_id &&
      pending.templateId === column.template_id;
    if (!sameColumn) {
      this.state.beginJudgment(
        this.current.instance_id,
        column.model_id,
        column.template_id,
        column.topk.map((t) => t.token),
      );
    }
    if (this.state.toggleToken(token)) {
      button.classList.toggle("selected");
    }
    this.renderStatus();
  }

  async submitJudgment(): Promise<void> {
    if (!this.current || !this.state.pending) return;
    const body = this.state.takeSubmittable();
    if (!body) {
      this.showError(new ApiError(0, "incomplete", "choose a rating before submitting", "rating"));
      return;
    }
    const pending = this.state.pending;
    try {
      await this.api.submitJudgment({
        instance_id: pending.instanceId,
        model_id: pending.modelId,
        template_id: pending.templateId,
        selected_tokens: body.selected_tokens,
        rating: body.rating,
        annotator_id: this.state.annotatorId,
      });
      this.state.clearPending();
      await this.select(pending.instanceId, { skipGuard: true });
      this.renderStatus("judgment saved");
    } catch (error) {
      // keep the pending state so the historian can correct and resubmit
      this.showError(error);
    }
  }

  async submitLabel(label: string): Promise<void> {
    if (!this.current) return;
    const instanceId = this.current.instance_id;
    try {
      await this.api.submitLabel({
        instance_id: instanceId,
        label,
        annotator_id: this.state.annotatorId,
      });
      await this.select(instanceId, { skipGuard: true });
      this.page = await this.api.listInstances(this.state.filters);
      const labeled = this.page.items.filter((item) => item.gold_label !== null).length;
      this.state.recordProgress(labeled, this.page.total);
      this.renderList();
      this.renderStatus(`labeled ${label}`);
    } catch (error) {
      this.showError(error);
    }
  }

  onKey(event: KeyboardEvent): void {
    if (event.target instanceof HTMLInputElement) return;
    if (event.key === "Tab") {
      event.preventDefault();
      if (this.columns().length) {
        this.activeColumnIndex = (this.activeColumnIndex + 1) % this.columns().length;
        this.highlightActiveColumn();
      }
      return;
    }
    if (event.key === "Enter") {
      void this.submitJudgment();
      return;
    }
    if (event.key === "j" || event.key === "k") {
      void this.step(event.key === "j" ? 1 : -1);
      return;
    }
    const rating = RATING_KEYS[event.key];
    if (rating) {
      this.state.setRating(rating);
      this.renderStatus(`rating: ${rating}`);
      return;
    }
    const digit = Number(event.key);
    if (!Number.isNaN(digit) && digit >= 1 && digit <= 9) {
      if (event.shiftKey) return; // shift+digit handled via event.code below
      const column = this.activeColumn();
      const token = column?.topk[digit - 1]?.token;
      if (column && token) {
        const button = this.detailPane.querySelector<HTMLButtonElement>(
          `section.column.active button.token[data-token="${CSS.escape(token)}"]`,
        );
        if (button) this.toggleToken(column, token, button);
      }
      return;
    }
    if (event.shiftKey && event.code.startsWith("Digit")) {
      const index = Number(event.code.slice(5)) - 1;
      const label = this.meta?.label_set[index];
      if (label) void this.submitLabel(label);
    }
  }

  async step(delta: number): Promise<void> {
    if (!this.page || !this.current) return;
    const ids = this.page.items.map((item) => item.instance_id);
    const index = ids.indexOf(this.current.instance_id);
    const next = ids[index + delta];
    if (next) await this.select(next);
  }

  renderStatus(note = ""): void {
    const pending = this.state.pending;
    const pendingText = pending
      ? ` · pending: ${pending.selected.size} token(s), rating ${pending.rating ?? "unset"}`
      : "";
    this.statusBar.textContent =
      `${this.state.annotatorId} · ${this.state.progressText()}${pendingText}` +
      (note ? ` · ${note}` : "");
  }

  showError(error: unknown): void {
    const old = this.detailPane.querySelector(".error");
    old?.remove();
    if (error instanceof ApiError) {
      this.detailPane.prepend(renderError(error.message, error.field));
    } else {
      this.detailPane.prepend(renderError(String(error), null));
    }
  }

  syncUrl(): void {
    window.history.replaceState(null, "", filtersToUrl(this.state.filters));
  }
}

export function mount(root: HTMLElement, baseUrl = ""): App {
  const app = new App(root, new ReviewApi(baseUrl));
  void app.refresh();
  return app;
}

declare global {
  interface Window {
    relclozeReview?: App;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  window.relclozeReview = mount(document.getElementById("app")!);
}

export { App, DEFAULT_PAGE_SIZE };
