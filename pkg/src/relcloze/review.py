"""Expert-review service: browse predictions, record judgments and labels.

Historians inspect the top-k mask predictions per model and template,
mark which tokens are semantically accurate, choose the models that advance
to extraction, and assign the gold relation labels that build the binomial
benchmark.  Persistence is a single append-only journal file; the active
state (current label per instance, active selection per model family) is a
pure fold over the journal, so exporting the journal and re-importing it
reproduces the state exactly.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel

from . import jsonl

RATINGS = ("accurate", "generic", "irrelevant")
FAMILIES = ("bert_like", "roberta_like")

JUDGMENT = "judgment"
SELECTION = "selection"
LABEL = "label"


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, field: str | None = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.field = field


# ---------------------------------------------------------------------------
# Journal
# ---------------------------------------------------------------------------

class Journal:
    """Append-only event log; one JSON record per line."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.events: list[dict[str, Any]] = []
        if self.path.exists():
            self.events = list(jsonl.read_records(self.path))

    def append(self, kind: str, data: dict[str, Any]) -> dict[str, Any]:
        event = {
            "seq": len(self.events),
            "kind": kind,
            "recorded_at": time.time(),
            "data": data,
        }
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(jsonl.dumps(event))
            fh.write("\n")
        self.events.append(event)
        return event


@dataclass
class ActiveState:
    """Pure fold of the journal into the current review state."""

    judgments: list[dict[str, Any]] = field(default_factory=list)
    selection_history: list[dict[str, Any]] = field(default_factory=list)
    label_history: list[dict[str, Any]] = field(default_factory=list)
    active_selections: dict[str, dict[str, Any]] = field(default_factory=dict)
    active_labels: dict[str, dict[str, Any]] = field(default_factory=dict)

    @classmethod
    def fold(cls, events: Iterable[dict[str, Any]]) -> "ActiveState":
        state = cls()
        for event in events:
            data = event["data"]
            if event["kind"] == JUDGMENT:
                state.judgments.append(data)
            elif event["kind"] == SELECTION:
                state.selection_history.append(data)
                state.active_selections[data["family"]] = data
            elif event["kind"] == LABEL:
                state.label_history.append(data)
                state.active_labels[data["instance_id"]] = data
        return state


def fold_active_selections(journal_path: str | Path) -> dict[str, str]:
    """Active model id per family, straight from a journal file."""
    path = Path(journal_path)
    if not path.exists():
        return {}
    state = ActiveState.fold(jsonl.read_records(path))
    return {family: sel["model_id"] for family, sel in state.active_selections.items()}


# ---------------------------------------------------------------------------
# Store
# ---------------------------------------------------------------------------

class ReviewStore:
    def __init__(
        self,
        *,
        sentences: dict[str, dict[str, Any]],
        instances: list[dict[str, Any]],
        predictions: dict[tuple[str, str, str], list[dict[str, Any]]],
        label_set: list[str],
        journal: Journal,
        shown_k: int = 10,
        known_models: set[str] | None = None,
    ):
        self.sentences = sentences
        self.instances = sorted(instances, key=lambda r: r["instance_id"])
        self.by_id = {r["instance_id"]: r for r in self.instances}
        self.predictions = predictions
        self._by_instance: dict[str, list[tuple[str, str]]] = {}
        for iid, model_id, template_id in predictions:
            self._by_instance.setdefault(iid, []).append((model_id, template_id))
        self.label_set = list(label_set)
        self.journal = journal
        self.shown_k = shown_k
        self.models = sorted({m for (_, m, _) in predictions} | (known_models or set()))
        self.templates = sorted({t for (_, _, t) in predictions})
        self.state = ActiveState.fold(journal.events)

    @classmethod
    def from_run(
        cls,
        run_dir: str | Path,
        *,
        label_set: list[str],
        shown_k: int = 10,
        journal_path: str | Path | None = None,
        registry_root: str | Path | None = None,
    ) -> "ReviewStore":
        run_dir = Path(run_dir)
        sentences = {
            r["sentence_id"]: r for r in jsonl.read_records(run_dir / "sentences.jsonl")
        }
        instances = list(jsonl.read_records(run_dir / "instances.jsonl"))
        predictions: dict[tuple[str, str, str], list[dict[str, Any]]] = {}
        pred_dir = run_dir / "predictions"
        if pred_dir.exists():
            for path in sorted(pred_dir.glob("*.jsonl")):
                for rec in jsonl.read_records(path):
                    key = (rec["instance_id"], rec["model_id"], rec["template_id"])
                    predictions[key] = rec["topk"]
        known_models: set[str] = set()
        if registry_root and Path(registry_root).exists():
            from .biasing import ModelRegistry

            known_models = set(ModelRegistry(registry_root).list_models())
        journal = Journal(journal_path or run_dir / "journal.jsonl")
        return cls(
            sentences=sentences,
            instances=instances,
            predictions=predictions,
            label_set=label_set,
            journal=journal,
            shown_k=shown_k,
            known_models=known_models,
        )

    # -- views --------------------------------------------------------------

    def shown_tokens(self, instance_id: str, model_id: str, template_id: str) -> list[str]:
        topk = self.predictions.get((instance_id, model_id, template_id), [])
        return [entry["token"] for entry in topk[: self.shown_k]]

    def active_label(self, instance_id: str) -> str | None:
        assignment = self.state.active_labels.get(instance_id)
        if assignment is not None:
            return assignment["label"]
        return self.by_id[instance_id].get("gold_label")

    def instance_view(
        self,
        rec: dict[str, Any],
        models: list[str] | None = None,
        templates: list[str] | None = None,
    ) -> dict[str, Any]:
        instance_id = rec["instance_id"]
        columns = []
        for model_id, template_id in self._by_instance.get(instance_id, []):
            if models and model_id not in models:
                continue
            if templates and template_id not in templates:
                continue
            columns.append(
                {
                    "model_id": model_id,
                    "template_id": template_id,
                    "topk": self.predictions[(instance_id, model_id, template_id)][: self.shown_k],
                }
            )
        columns.sort(key=lambda c: (c["model_id"], c["template_id"]))
        judged = any(j["instance_id"] == instance_id for j in self.state.judgments)
        return {
            "instance_id": instance_id,
            "sentence_id": rec["sentence_id"],
            "kind": rec["kind"],
            "nested": rec.get("nested", False),
            "e1": rec["e1"],
            "e2": rec.get("e2"),
            "gold_label": self.active_label(instance_id),
            "judged": judged,
            "sentence": self.sentences.get(rec["sentence_id"]),
            "predictions": columns,
        }

    # -- mutations ----------------------------------------------------------

    def record_judgment(self, payload: "JudgmentIn") -> dict[str, Any]:
        if payload.instance_id not in self.by_id:
            raise ApiError(404, "not_found", f"unknown instance {payload.instance_id}", "instance_id")
        key = (payload.instance_id, payload.model_id, payload.template_id)
        if key not in self.predictions:
            raise ApiError(
                404,
                "not_found",
                f"no predictions for model {payload.model_id!r} / template "
                f"{payload.template_id!r} on this instance",
                "model_id",
            )
        if payload.rating not in RATINGS:
            raise ApiError(422, "validation_error", f"rating must be one of {RATINGS}", "rating")
        shown = set(self.shown_tokens(*key))
        stray = [t for t in payload.selected_tokens if t not in shown]
        if stray:
            raise ApiError(
                422,
                "validation_error",
                f"tokens {stray} were never shown for this column",
                "selected_tokens",
            )
        data = payload.model_dump()
        data["judgment_id"] = f"j{len(self.journal.events)}"
        self.journal.append(JUDGMENT, data)
        self.state.judgments.append(data)
        return data

    def record_selection(self, payload: "SelectionIn") -> dict[str, Any]:
        if payload.family not in FAMILIES:
            raise ApiError(422, "validation_error", f"family must be one of {FAMILIES}", "family")
        if self.models and payload.model_id not in self.models:
            raise ApiError(404, "not_found", f"unknown model {payload.model_id}", "model_id")
        active = self.state.active_selections.get(payload.family)
        if active is not None and active["model_id"] == payload.model_id:
            return active  # idempotent re-selection
        data = payload.model_dump()
        data["selection_id"] = f"s{len(self.journal.events)}"
        self.journal.append(SELECTION, data)
        self.state.selection_history.append(data)
        self.state.active_selections[payload.family] = data
        return data

    def record_label(self, payload: "LabelIn") -> dict[str, Any]:
        if payload.instance_id not in self.by_id:
            raise ApiError(404, "not_found", f"unknown instance {payload.instance_id}", "instance_id")
        if self.label_set and payload.label not in self.label_set:
            raise ApiError(
                422,
                "validation_error",
                f"label {payload.label!r} outside the configured set {self.label_set}",
                "label",
            )
        data = payload.model_dump()
        self.journal.append(LABEL, data)
        self.state.label_history.append(data)
        self.state.active_labels[payload.instance_id] = data
        return data

    # -- exports ------------------------------------------------------------

    def export(self, fmt: str) -> str:
        if fmt == "jsonl":
            return "".join(jsonl.dumps(e) + "\n" for e in self.journal.events)
        if fmt == "labels":
            return "".join(
                jsonl.dumps({"instance_id": iid, "label": data["label"]}) + "\n"
                for iid, data in sorted(self.state.active_labels.items())
            )
        if fmt == "instances":
            lines = []
            for rec in self.instances:
                merged = dict(rec)
                label = self.active_label(rec["instance_id"])
                if label is not None:
                    merged["gold_label"] = label
                lines.append(jsonl.dumps(merged) + "\n")
            return "".join(lines)
        raise ApiError(400, "bad_request", f"unknown export format {fmt!r}", "format")


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------

class JudgmentIn(BaseModel):
    instance_id: str
    model_id: str
    template_id: str
    selected_tokens: list[str] = []
    rating: str
    annotator_id: str


class SelectionIn(BaseModel):
    family: str
    model_id: str
    annotator_id: str
    rationale: str = ""


class LabelIn(BaseModel):
    instance_id: str
    label: str
    annotator_id: str


def create_app(store: ReviewStore) -> FastAPI:
    app = FastAPI(title="relcloze expert review")

    @app.exception_handler(ApiError)
    async def _api_error(_request: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status,
            content={"code": exc.code, "message": exc.message, "field": exc.field},
        )

    from fastapi.exceptions import RequestValidationError

    @app.exception_handler(RequestValidationError)
    async def _validation_error(_request: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        loc = [str(part) for part in first.get("loc", []) if part != "body"]
        return JSONResponse(
            status_code=422,
            content={
                "code": "validation_error",
                "message": first.get("msg", "invalid request"),
                "field": ".".join(loc) or None,
            },
        )

    @app.get("/instances")
    def list_instances(
        kind: str | None = None,
        labeled: bool | None = None,
        entity_count: int | None = None,
        models: str | None = None,
        templates: str | None = None,
        page: int = 1,
        page_size: int = 20,
    ):
        if page < 1 or page_size < 1:
            raise ApiError(422, "validation_error", "page and page_size must be >= 1", "page")
        page_size = min(page_size, 200)
        model_list = [m for m in (models or "").split(",") if m] or None
        template_list = [t for t in (templates or "").split(",") if t] or None
        for m in model_list or []:
            if m not in store.models:
                raise ApiError(404, "not_found", f"unknown model {m}", "models")
        for t in template_list or []:
            if t not in store.templates:
                raise ApiError(404, "not_found", f"unknown template {t}", "templates")

        selected = []
        for rec in store.instances:
            if kind is not None and rec["kind"] != kind:
                continue
            if entity_count is not None:
                sentence = store.sentences.get(rec["sentence_id"]) or {}
                if len(sentence.get("entities", [])) != entity_count:
                    continue
            if labeled is not None:
                has = store.active_label(rec["instance_id"]) is not None
                if has != labeled:
                    continue
            selected.append(rec)
        start = (page - 1) * page_size
        items = [
            store.instance_view(rec, model_list, template_list)
            for rec in selected[start : start + page_size]
        ]
        return {"items": items, "page": page, "page_size": page_size, "total": len(selected)}

    @app.get("/instances/{instance_id}")
    def get_instance(instance_id: str):
        rec = store.by_id.get(instance_id)
        if rec is None:
            raise ApiError(404, "not_found", f"unknown instance {instance_id}", "instance_id")
        return store.instance_view(rec)

    @app.post("/judgments", status_code=201)
    def post_judgment(payload: JudgmentIn):
        data = store.record_judgment(payload)
        return {"judgment_id": data["judgment_id"]}

    @app.post("/selections", status_code=201)
    def post_selection(payload: SelectionIn):
        data = store.record_selection(payload)
        return {"selection_id": data["selection_id"], "family": data["family"]}

    @app.get("/selections/active")
    def active_selections():
        return {family: store.state.active_selections.get(family) for family in FAMILIES}

    @app.post("/labels", status_code=201)
    def post_label(payload: LabelIn):
        data = store.record_label(payload)
        return {"instance_id": data["instance_id"], "label": data["label"]}

    @app.get("/export")
    def export(format: str = "jsonl"):
        body = store.export(format)
        return PlainTextResponse(body, media_type="application/x-ndjson")

    @app.get("/meta")
    def meta():
        return {
            "models": store.models,
            "templates": store.templates,
            "label_set": store.label_set,
            "shown_k": store.shown_k,
            "total_instances": len(store.instances),
        }

    return app
