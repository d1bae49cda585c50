"""Stage orchestration with a content-digested run manifest.

A run lives in one directory; every stage reads earlier artifacts, writes
its own atomically, and records input/output digests in ``manifest.json``.
Re-running an up-to-date stage is a no-op; consuming an artifact whose
bytes no longer match the digest recorded by its producing stage is a
stale-input error.  Artifacts never embed timestamps, so a run repeated
with the same configuration and seeds produces byte-identical files.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import yaml

from . import jsonl
from .biasing import BiasingConfig, ModelRegistry, run_biasing
from .clustering import ClusteringConfig, ClusteringResult, kmeans_fit
from .corpus import (
    AnnotatedSentence,
    Document,
    EXPERT_BOOK,
    NormalizationRule,
    RelationInstance,
    SegmentationRules,
    TerminatorRule,
    attach_entities,
    build_biasing_chunks,
    chunk_from_record,
    chunk_to_record,
    document_from_record,
    document_to_record,
    entity_histogram,
    generate_instances,
    instance_from_record,
    instance_to_record,
    normalize_document,
    segment_sentences,
    sentence_from_record,
    sentence_to_record,
    word_stats,
)
from .encoders import embedding_from_record, embedding_to_record
from .errors import ConfigurationError, StageError
from .evaluation import EvalReport, build_report, compare_runs
from .templates import (
    DEFAULT_MASK_TOKEN,
    DEFAULT_SEP_TOKEN,
    FilledPrompt,
    fill_template,
    load_templates,
    prompt_from_record,
    prompt_to_record,
    truncate_for_budget,
)

logger = logging.getLogger(__name__)

STAGE_ORDER = ["compose", "stats", "bias", "prompt", "embed", "cluster", "eval", "report"]


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def load_config(path: str | Path) -> dict[str, Any]:
    with open(path, encoding="utf-8") as fh:
        config = yaml.safe_load(fh) or {}
    if not isinstance(config, dict):
        raise ConfigurationError(f"config file {path} must contain a mapping")
    return config


def load_rulesets(path: str | Path) -> tuple[list[NormalizationRule], SegmentationRules]:
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh) or {}
    rules = [
        NormalizationRule(r["pattern"], r["replacement"])
        for r in doc.get("normalization", {}).get("rules", [])
    ]
    seg = doc.get("segmentation", {})
    terminators = tuple(
        TerminatorRule(t["char"], bool(t.get("keep", True)))
        for t in seg.get("terminators", [])
    ) or SegmentationRules().terminators
    segmentation = SegmentationRules(
        terminators=terminators,
        abbreviations=tuple(seg.get("abbreviations", [])),
    )
    return rules, segmentation


def _section(config: dict[str, Any], name: str) -> dict[str, Any]:
    value = config.get(name) or {}
    if not isinstance(value, dict):
        raise ConfigurationError(f"config section {name!r} must be a mapping")
    return value


def _models(config: dict[str, Any]) -> list[str]:
    models = _section(config, "prompting").get("models") or []
    if isinstance(models, str):
        raise ConfigurationError(
            "prompting.models must be a list of model ids (or the string 'active')"
        )
    if not models:
        raise ConfigurationError("prompting.models must list at least one model id")
    return [str(m) for m in models]


def _resolve_models(ctx: "StageContext") -> list[str]:
    """Model list for the run; ``models: active`` reads the historians'
    active selections from the review journal."""
    models = _section(ctx.config, "prompting").get("models")
    if models == "active":
        from .review import fold_active_selections

        serve_cfg = _section(ctx.config, "serve")
        journal = ctx.run_dir / serve_cfg.get("journal", "journal.jsonl")
        active = fold_active_selections(journal)
        if not active:
            raise StageError(
                "prompting.models is 'active' but the review journal records no "
                "model selections (run `serve` and select models first)"
            )
        return [active[family] for family in sorted(active)]
    return _models(ctx.config)


def _slug(model_id: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in model_id)


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def config_digest(payload: Any) -> str:
    return hashlib.sha256(jsonl.dumps({"config": payload}).encode("utf-8")).hexdigest()


class RunManifest:
    def __init__(self, run_dir: str | Path, run_id: str, data: dict[str, Any] | None = None):
        self.run_dir = Path(run_dir)
        self.run_id = run_id
        self.data = data or {
            "run_id": run_id,
            "created_at": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "stages": {},
        }

    @property
    def path(self) -> Path:
        return self.run_dir / "manifest.json"

    @classmethod
    def load_or_create(cls, run_dir: str | Path, run_id: str) -> "RunManifest":
        run_dir = Path(run_dir)
        path = run_dir / "manifest.json"
        if path.exists():
            data = jsonl.read_json(path)
            if data.get("run_id") != run_id:
                raise StageError(
                    f"run directory {run_dir} belongs to run {data.get('run_id')!r}, "
                    f"not {run_id!r}"
                )
            return cls(run_dir, run_id, data)
        run_dir.mkdir(parents=True, exist_ok=True)
        return cls(run_dir, run_id)

    def save(self) -> None:
        jsonl.write_json(self.path, self.data)

    def stage(self, name: str) -> dict[str, Any] | None:
        return self.data["stages"].get(name)

    def record_stage(
        self,
        name: str,
        *,
        config_dig: str,
        inputs: dict[str, Path],
        outputs: dict[str, Path],
    ) -> None:
        self.data["stages"][name] = {
            "config_digest": config_dig,
            "inputs": {
                key: {"path": str(p), "digest": file_digest(p)} for key, p in inputs.items()
            },
            "outputs": {
                key: {"path": str(p), "digest": file_digest(p)} for key, p in outputs.items()
            },
            "completed_at": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        }
        self.save()

    def artifact(self, key: str) -> Path | None:
        for entry in self.data["stages"].values():
            if key in entry["outputs"]:
                return Path(entry["outputs"][key]["path"])
        return None

    def artifact_digest(self, key: str) -> str | None:
        for entry in self.data["stages"].values():
            if key in entry["outputs"]:
                return entry["outputs"][key]["digest"]
        return None


# ---------------------------------------------------------------------------
# Stage plumbing
# ---------------------------------------------------------------------------

@dataclass
class StageContext:
    manifest: RunManifest
    config: dict[str, Any]

    @property
    def run_dir(self) -> Path:
        return self.manifest.run_dir

    def registry(self) -> ModelRegistry:
        root = self.config.get("registry")
        if not root:
            raise ConfigurationError("config key 'registry' (model registry path) is required")
        return ModelRegistry(root)

    def require_artifact(self, key: str, producer: str) -> Path:
        path = self.manifest.artifact(key)
        if path is None or not path.exists():
            raise StageError(f"requires {key.split(':')[0]} artifact (run `{producer}`)")
        recorded = self.manifest.artifact_digest(key)
        if recorded != file_digest(path):
            raise StageError(
                f"artifact {key} at {path} is stale: bytes changed since `{producer}` "
                "recorded it (re-run the producing stage)"
            )
        return path

    def external_input(self, section: str, key: str) -> Path:
        value = _section(self.config, section).get(key)
        if not value:
            raise ConfigurationError(f"config key {section}.{key} is required")
        path = Path(value)
        if not path.exists():
            raise StageError(f"input file {path} ({section}.{key}) does not exist")
        return path


StageFn = Callable[[StageContext], tuple[dict[str, Path], dict[str, Path]]]


def _stage_config_view(name: str, config: dict[str, Any]) -> Any:
    sections = {
        "compose": ["corpus"],
        "stats": ["corpus"],
        "bias": ["biasing", "registry"],
        "prompt": ["prompting"],
        "embed": ["prompting", "registry"],
        "cluster": ["clustering", "prompting"],
        "eval": ["evaluation", "clustering", "prompting"],
        "report": ["evaluation", "prompting"],
    }[name]
    return {s: config.get(s) for s in sections}


def execute_stage(name: str, manifest: RunManifest, config: dict[str, Any]) -> RunManifest:
    """Run one stage if its inputs or configuration changed; no-op otherwise."""
    try:
        fn: StageFn = _STAGES[name]
    except KeyError:
        raise StageError(f"unknown stage {name!r}; expected one of {STAGE_ORDER}") from None
    ctx = StageContext(manifest=manifest, config=config)
    dig = config_digest(_stage_config_view(name, config))

    entry = manifest.stage(name)
    if entry is not None and entry["config_digest"] == dig and _entry_fresh(entry):
        logger.info("stage %s is up to date; skipping", name)
        return manifest

    inputs, outputs = fn(ctx)
    manifest.record_stage(name, config_dig=dig, inputs=inputs, outputs=outputs)
    return manifest


def _entry_fresh(entry: dict[str, Any]) -> bool:
    for rec in list(entry["inputs"].values()) + list(entry["outputs"].values()):
        path = Path(rec["path"])
        if not path.exists() or file_digest(path) != rec["digest"]:
            return False
    return True


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def _stage_compose(ctx: StageContext) -> tuple[dict[str, Path], dict[str, Path]]:
    corpus_cfg = _section(ctx.config, "corpus")
    documents_path = ctx.external_input("corpus", "documents")
    annotations_path = ctx.external_input("corpus", "annotations")
    rulesets_path = ctx.external_input("corpus", "rulesets")
    rules, segmentation = load_rulesets(rulesets_path)

    documents: list[Document] = []
    sentences: list[AnnotatedSentence] = []
    for rec in jsonl.read_records(documents_path):
        doc = normalize_document(
            rec["raw_text"],
            rules,
            doc_id=rec["doc_id"],
            title=rec.get("title", ""),
            source_kind=rec.get("source_kind", "target_text"),
        )
        documents.append(doc)
        doc_sentences = segment_sentences(doc, segmentation)
        doc_annotations = [
            ((a["start"], a["end"]), a["entity_id"])
            for a in jsonl.read_records(annotations_path)
            if a["doc_id"] == doc.doc_id
        ]
        sentences.extend(attach_entities(doc_sentences, doc_annotations))

    limit = corpus_cfg.get("pair_entity_limit", 3)
    instances: list[RelationInstance] = []
    for sentence in sentences:
        instances.extend(generate_instances(sentence, pair_entity_limit=limit))

    include_target = corpus_cfg.get("include_target_in_chunks", True)
    chunk_docs = [
        d for d in documents if d.source_kind == EXPERT_BOOK or include_target
    ]
    max_tokens = corpus_cfg.get("chunk_max_tokens", 128)
    chunks, chunk_warnings = build_biasing_chunks(
        chunk_docs,
        max_tokens,
        lambda text: len(text.split()) + 1,  # whitespace proxy + sequence-start token
        segmentation=segmentation,
    )
    for warning in chunk_warnings:
        logger.warning("chunking: %s (%s %s)", warning.message, warning.doc_id, warning.char_range)

    run_dir = ctx.run_dir
    outputs = {
        "documents_norm": jsonl.write_records(
            run_dir / "documents_norm.jsonl", (document_to_record(d) for d in documents)
        ),
        "sentences": jsonl.write_records(
            run_dir / "sentences.jsonl", (sentence_to_record(s) for s in sentences)
        ),
        "instances": jsonl.write_records(
            run_dir / "instances.jsonl", (instance_to_record(i) for i in instances)
        ),
        "chunks": jsonl.write_records(
            run_dir / "chunks.jsonl", (chunk_to_record(c) for c in chunks)
        ),
    }
    inputs = {
        "documents": documents_path,
        "annotations": annotations_path,
        "rulesets": rulesets_path,
    }
    return inputs, outputs


def _stage_stats(ctx: StageContext) -> tuple[dict[str, Path], dict[str, Path]]:
    sentences_path = ctx.require_artifact("sentences", "compose")
    documents_path = ctx.require_artifact("documents_norm", "compose")
    sentences = [sentence_from_record(r) for r in jsonl.read_records(sentences_path)]
    documents = [document_from_record(r) for r in jsonl.read_records(documents_path)]
    histogram = entity_histogram(sentences)
    stats = {
        "entity_histogram": {
            "counts": {str(k): v for k, v in sorted(histogram.counts.items())},
            "total_sentences": histogram.total_sentences,
        },
        "entity_count_percentiles": {
            str(p): histogram.percentile(p) for p in (25, 50, 75, 90)
        }
        if histogram.total_sentences
        else {},
        "word_stats": [
            {
                "title": row.title,
                "doc_id": row.doc_id,
                "mean": row.mean,
                "std": row.std,
                "median": row.median,
                "total_words": row.total_words,
                "total_sentences": row.total_sentences,
            }
            for row in word_stats(documents, sentences).rows
        ],
    }
    out = jsonl.write_json(ctx.run_dir / "stats.json", stats)
    return (
        {"sentences": sentences_path, "documents_norm": documents_path},
        {"stats": out},
    )


def _stage_bias(ctx: StageContext) -> tuple[dict[str, Path], dict[str, Path]]:
    bias_cfg = dict(_section(ctx.config, "biasing"))
    if bias_cfg.get("corpus"):
        # explicit chunk-set file instead of this run's compose output
        chunks_path = Path(bias_cfg["corpus"])
        if not chunks_path.exists():
            raise StageError(f"biasing.corpus file {chunks_path} does not exist")
    else:
        chunks_path = ctx.require_artifact("chunks", "compose")
    if not bias_cfg.get("base_model"):
        raise ConfigurationError("biasing.base_model is required")
    config = BiasingConfig(
        base_model_id=bias_cfg["base_model"],
        learning_rate=float(bias_cfg.get("learning_rate", 5e-5)),
        epochs=int(bias_cfg.get("epochs", 5)),
        masking_probability=float(bias_cfg.get("masking_probability", 0.15)),
        corrupt_split=tuple(bias_cfg.get("corrupt_split", (0.8, 0.1, 0.1))),
        corpus_ref=str(chunks_path),
        seed=int(bias_cfg.get("seed", 0)),
        batch_size=int(bias_cfg.get("batch_size", 16)),
        output_model_id=bias_cfg.get("output_model"),
    )
    registry = ctx.registry()
    chunks = [chunk_from_record(r) for r in jsonl.read_records(chunks_path)]
    report = run_biasing(registry, config, chunks)
    out = jsonl.write_json(ctx.run_dir / "biasing_report.json", report.to_record())
    return {"chunks": chunks_path}, {"biasing_report": out}


def _stage_prompt(ctx: StageContext) -> tuple[dict[str, Path], dict[str, Path]]:
    sentences_path = ctx.require_artifact("sentences", "compose")
    instances_path = ctx.require_artifact("instances", "compose")
    prompting = _section(ctx.config, "prompting")
    table = load_templates(_custom_template_records(prompting))
    wanted = prompting.get("templates") or ["P1", "P_anaphoric"]
    missing = [t for t in wanted if t not in table]
    if missing:
        raise ConfigurationError(f"unknown template ids in prompting.templates: {missing}")
    templates = [table[t] for t in wanted]

    sentences = {
        r["sentence_id"]: sentence_from_record(r) for r in jsonl.read_records(sentences_path)
    }
    prompts: list[FilledPrompt] = []
    for rec in jsonl.read_records(instances_path):
        instance = instance_from_record(rec)
        sentence = sentences[instance.sentence_id]
        for template in templates:
            if template.arity != instance.kind:
                continue
            prompts.append(fill_template(template, instance, sentence))
    prompts.sort(key=lambda p: (p.instance_id, p.template_id))
    out = jsonl.write_records(
        ctx.run_dir / "prompts.jsonl", (prompt_to_record(p) for p in prompts)
    )
    return (
        {"sentences": sentences_path, "instances": instances_path},
        {"prompts": out},
    )


def _stage_embed(ctx: StageContext) -> tuple[dict[str, Path], dict[str, Path]]:
    prompts_path = ctx.require_artifact("prompts", "prompt")
    instances_path = ctx.require_artifact("instances", "compose")
    prompting = _section(ctx.config, "prompting")
    registry = ctx.registry()
    top_k = int(prompting.get("top_k", 10))
    encoding = prompting.get("vector_encoding", "decimal")

    instances = {
        r["instance_id"]: instance_from_record(r) for r in jsonl.read_records(instances_path)
    }
    prompt_records = [prompt_from_record(r) for r in jsonl.read_records(prompts_path)]

    inputs = {"prompts": prompts_path, "instances": instances_path}
    outputs: dict[str, Path] = {}
    for model_id in _resolve_models(ctx):
        encoder = registry.load_encoder(model_id)
        slug = _slug(model_id)
        embeddings = []
        predictions = []
        dropped = []
        truncated = []
        for filled in prompt_records:
            text = filled.text.replace(DEFAULT_MASK_TOKEN, encoder.mask_token).replace(
                DEFAULT_SEP_TOKEN, encoder.separator_token
            )
            candidate = FilledPrompt(
                instance_id=filled.instance_id,
                template_id=filled.template_id,
                text=text,
                sentence_text=filled.sentence_text,
                truncated=filled.truncated,
            )
            candidate = truncate_for_budget(
                candidate,
                encoder.count_tokens,
                encoder.max_sequence_length,
                instances.get(filled.instance_id),
            )
            if candidate.dropped:
                dropped.append({"instance_id": filled.instance_id, "template_id": filled.template_id})
                continue
            if candidate.truncated:
                truncated.append(
                    {"instance_id": filled.instance_id, "template_id": filled.template_id}
                )
            prompt = encoder.tokenize(
                candidate.text,
                instance_id=filled.instance_id,
                template_id=filled.template_id,
                truncated=candidate.truncated,
            )
            embeddings.append(
                embedding_to_record(encoder.mask_hidden_state(prompt), encoding=encoding)
            )
            topk = encoder.predict_masked_topk(prompt, min(top_k, encoder.vocabulary_size))
            predictions.append(
                {
                    "instance_id": filled.instance_id,
                    "model_id": model_id,
                    "template_id": filled.template_id,
                    "topk": [{"token": t, "probability": p} for t, p in topk.items],
                }
            )
        outputs[f"embeddings:{model_id}"] = jsonl.write_records(
            ctx.run_dir / "embeddings" / f"{slug}.jsonl", embeddings
        )
        outputs[f"predictions:{model_id}"] = jsonl.write_records(
            ctx.run_dir / "predictions" / f"{slug}.jsonl", predictions
        )
        outputs[f"embed_meta:{model_id}"] = jsonl.write_json(
            ctx.run_dir / "embeddings" / f"{slug}.meta.json",
            {
                "model_id": model_id,
                "mask_token": encoder.mask_token,
                "separator_token": encoder.separator_token,
                "sequence_start_convention": "backend standard (leading classification token)",
                "hidden_size": encoder.hidden_size,
                "max_sequence_length": encoder.max_sequence_length,
                "vector_encoding": encoding,
                "dropped": dropped,
                "truncated": truncated,
            },
        )
    return inputs, outputs


def _custom_template_records(prompting: dict[str, Any]) -> list[dict[str, Any]] | None:
    """prompting.custom_templates: inline records or a YAML/JSON file path."""
    custom = prompting.get("custom_templates")
    if custom is None or isinstance(custom, list):
        return custom
    path = Path(custom)
    if not path.exists():
        raise ConfigurationError(f"prompting.custom_templates file {path} does not exist")
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh) or []
    if isinstance(doc, dict):
        doc = doc.get("templates", [])
    return list(doc)


def _template_selection(config: dict[str, Any]) -> tuple[str, str]:
    prompting = _section(config, "prompting")
    clustering = _section(config, "clustering")
    table = load_templates(_custom_template_records(prompting))
    wanted = prompting.get("templates") or ["P1", "P_anaphoric"]
    pair_default = next((t for t in wanted if t in table and table[t].arity == "pair"), None)
    ana_default = next((t for t in wanted if t in table and table[t].arity == "anaphoric"), None)
    pair_template = clustering.get("pair_template", pair_default)
    anaphoric_template = clustering.get("anaphoric_template", ana_default)
    return pair_template, anaphoric_template


def _stage_cluster(ctx: StageContext) -> tuple[dict[str, Path], dict[str, Path]]:
    instances_path = ctx.require_artifact("instances", "compose")
    clustering = _section(ctx.config, "clustering")
    pair_template, anaphoric_template = _template_selection(ctx.config)
    config = ClusteringConfig(
        k=int(clustering.get("k", 2)),
        seed=int(clustering.get("seed", 0)),
        max_iterations=int(clustering.get("max_iterations", 300)),
        tolerance=float(clustering.get("tolerance", 1e-6)),
        n_restarts=int(clustering.get("n_restarts", 1)),
    )
    kinds = {r["instance_id"]: r["kind"] for r in jsonl.read_records(instances_path)}

    inputs = {"instances": instances_path}
    outputs: dict[str, Path] = {}
    for model_id in _resolve_models(ctx):
        key = f"embeddings:{model_id}"
        embeddings_path = ctx.require_artifact(key, "embed")
        inputs[key] = embeddings_path
        wanted_template = {
            instance_id: (pair_template if kind == "pair" else anaphoric_template)
            for instance_id, kind in kinds.items()
        }
        selected = [
            embedding_from_record(rec)
            for rec in jsonl.read_records(embeddings_path)
            if wanted_template.get(rec["instance_id"]) == rec["template_id"]
        ]
        if not selected:
            raise StageError(
                f"no embeddings for model {model_id} match the template selection "
                f"({pair_template}, {anaphoric_template})"
            )
        result = kmeans_fit(selected, config)
        outputs[f"clustering:{model_id}"] = jsonl.write_json(
            ctx.run_dir / "clustering" / f"{_slug(model_id)}.json", result.to_record()
        )
    return inputs, outputs


def _gold_labels(ctx: StageContext, instances_path: Path) -> dict[str, str]:
    labels: dict[str, str] = {}
    for rec in jsonl.read_records(instances_path):
        if rec.get("gold_label"):
            labels[rec["instance_id"]] = rec["gold_label"]
    labels_path = _section(ctx.config, "evaluation").get("labels")
    if labels_path:
        path = Path(labels_path)
        if not path.exists():
            raise StageError(f"evaluation.labels file {path} does not exist")
        for rec in jsonl.read_records(path):
            labels[rec["instance_id"]] = rec["label"]
    return labels


def _stage_eval(ctx: StageContext) -> tuple[dict[str, Path], dict[str, Path]]:
    instances_path = ctx.require_artifact("instances", "compose")
    evaluation = _section(ctx.config, "evaluation")
    positive_label = evaluation.get("positive_label")
    if not positive_label:
        raise ConfigurationError("evaluation.positive_label is required")
    k = int(_section(ctx.config, "clustering").get("k", 2))
    pair_template, anaphoric_template = _template_selection(ctx.config)
    gold = _gold_labels(ctx, instances_path)
    if not gold:
        raise StageError(
            "no gold labels available; label instances through the review service "
            "or provide evaluation.labels"
        )

    inputs = {"instances": instances_path}
    labels_path = evaluation.get("labels")
    if labels_path:
        inputs["labels"] = Path(labels_path)
    outputs: dict[str, Path] = {}
    evaluated_sets: dict[str, frozenset[str]] = {}
    for model_id in _resolve_models(ctx):
        key = f"clustering:{model_id}"
        clustering_path = ctx.require_artifact(key, "cluster")
        inputs[key] = clustering_path
        result = ClusteringResult.from_record(jsonl.read_json(clustering_path))
        assignments = {
            instance_id: cluster
            for instance_id, cluster in result.assignments.items()
            if instance_id in gold
        }
        if not assignments:
            raise StageError(f"no labeled instances among the clustered ones for {model_id}")
        evaluated_sets[model_id] = frozenset(assignments)
        report = build_report(
            run_id=ctx.manifest.run_id,
            model_id=model_id,
            template_set=[t for t in (pair_template, anaphoric_template) if t],
            assignments=assignments,
            gold={i: gold[i] for i in assignments},
            k=k,
            positive_label=positive_label,
        )
        outputs[f"eval:{model_id}"] = jsonl.write_json(
            ctx.run_dir / "eval" / f"{_slug(model_id)}.json", report.to_record()
        )
    distinct = set(evaluated_sets.values())
    if len(distinct) > 1:
        raise StageError(
            "models were evaluated on different instance sets; the comparison "
            "would be confounded (check per-model truncation drops)"
        )
    return inputs, outputs


def _stage_report(ctx: StageContext) -> tuple[dict[str, Path], dict[str, Path]]:
    stats_path = ctx.require_artifact("stats", "stats")
    inputs = {"stats": stats_path}
    reports = []
    for model_id in _resolve_models(ctx):
        key = f"eval:{model_id}"
        path = ctx.require_artifact(key, "eval")
        inputs[key] = path
        reports.append(EvalReport.from_record(jsonl.read_json(path)))
    text = make_report(jsonl.read_json(stats_path), reports)
    txt_path = jsonl.write_text(ctx.run_dir / "report.txt", text)
    payload = {
        "runs": [r.to_record() for r in reports],
        "comparisons": [
            compare_runs(reports[0], other).to_record() for other in reports[1:]
        ],
    }
    json_path = jsonl.write_json(ctx.run_dir / "report.json", payload)
    return inputs, {"report_txt": txt_path, "report_json": json_path}


_STAGES: dict[str, StageFn] = {
    "compose": _stage_compose,
    "stats": _stage_stats,
    "bias": _stage_bias,
    "prompt": _stage_prompt,
    "embed": _stage_embed,
    "cluster": _stage_cluster,
    "eval": _stage_eval,
    "report": _stage_report,
}


# ---------------------------------------------------------------------------
# Human-readable report
# ---------------------------------------------------------------------------

def make_report(stats: dict[str, Any], reports: list[EvalReport]) -> str:
    lines: list[str] = []
    lines.append("Corpus statistics")
    lines.append("=" * 17)
    histogram = stats.get("entity_histogram", {})
    counts = histogram.get("counts", {})
    pairs = "  ".join(f"{k}:{v}" for k, v in sorted(counts.items(), key=lambda kv: int(kv[0])))
    lines.append(f"Entities per sentence: {pairs}  (total {histogram.get('total_sentences', 0)})")
    percentiles = stats.get("entity_count_percentiles", {})
    if percentiles:
        lines.append(
            "Entity-count percentiles: "
            + "  ".join(f"p{p}={v}" for p, v in sorted(percentiles.items(), key=lambda kv: int(kv[0])))
        )
    lines.append("")
    lines.append(
        f"{'Title':<28}{'Mean':>8}{'Std':>8}{'Median':>8}{'Words':>8}{'Sents':>7}"
    )
    for row in stats.get("word_stats", []):
        lines.append(
            f"{row['title']:<28}{row['mean']:>8.2f}{row['std']:>8.2f}"
            f"{row['median']:>8.2f}{row['total_words']:>8}{row['total_sentences']:>7}"
        )
    lines.append("")
    if reports:
        lines.append("Extraction results")
        lines.append("=" * 18)
        lines.append(
            f"(positive label {reports[0].positive_label!r}, "
            f"templates {', '.join(reports[0].template_set)})"
        )
        lines.append(f"{'Model':<28}{'Accuracy':>10}{'Precision':>11}{'Recall':>9}{'F1':>9}")
        for report in reports:
            m = report.metrics
            lines.append(
                f"{report.model_id:<28}{m.accuracy:>10.4f}{m.precision:>11.4f}"
                f"{m.recall:>9.4f}{m.f1:>9.4f}"
            )
        for other in reports[1:]:
            comparison = compare_runs(reports[0], other)
            lines.append("")
            lines.append(f"Delta {other.model_id} - {reports[0].model_id}:")
            deltas = comparison.deltas
            lines.append(
                "  "
                + "  ".join(
                    f"{name} {deltas[name]:+.4f}"
                    for name in ("accuracy", "precision", "recall", "f1")
                )
            )
            lines.append(
                f"  agreement: both={comparison.both_correct} only_first={comparison.only_a} "
                f"only_second={comparison.only_b} neither={comparison.neither}"
            )
    lines.append("")
    return "\n".join(lines)
