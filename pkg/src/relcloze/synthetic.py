"""Synthetic inquisitorial-flavored corpora for tests and demos.

The real corpus (a 16th-century trial transcript plus expert books) is
private, so fixtures are generated: short Spanish-like sentences with a
controlled number of entity mentions per sentence, archaic spellings in the
filler words (``estaua``, ``dixo``) that the normalization ruleset must
modernize, and a deterministic two-label relation scheme for the binomial
benchmark.  The generator composes the *normalized* text with known entity
offsets and derives the raw text by re-archaizing filler words, so expert
annotations (which reference normalized coordinates) are exact by
construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np
import yaml

from . import jsonl

LABEL_A = "viaje"
LABEL_B = "carta"

PEOPLE = [
    "Pedro de Cazalla",
    "Padilla",
    "Catalina Román",
    "Sebastián de Landeta",
    "Francisco de Vivero",
    "Beatriz de Vivero",
    "Juan de Ulloa",
    "Ana Enríquez",
    "Cristóbal de Padilla",
    "Antonio Herrezuelo",
    "Leonor de Cisneros",
    "Carlos de Seso",
    "Isabel de Estrada",
    "Juana Sánchez",
    "Domingo de Rojas",
    "Pedro Sarmiento",
    "Mencía de Figueroa",
    "Luis de Rojas",
]

PLACES = ["Pedrosa", "Valladolid", "Toro", "Zamora", "Palencia", "Salamanca"]

# Forward rules (raw -> modern); the generator writes the archaic side into
# the raw text and the modern side into the normalized text.
NORMALIZATION_RULES = [
    ("estaua", "estaba"),
    ("dixo", "dijo"),
    ("auia", "había"),
    ("escriuio", "escribió"),
]
_ARCHAIZE = {modern: archaic for archaic, modern in NORMALIZATION_RULES}

FILLER_SENTENCES = [
    "Y después de esto no pasó nada aquel día.",
    "Y el tribunal dijo que el proceso había de continuar.",
]

EXPERT_BOOK_OPENERS = [
    "El Santo Oficio",
    "La doctrina",
    "El catecismo",
    "La santa escritura",
    "El tribunal",
    "La congregación",
]
EXPERT_BOOK_VERBS = ["dijo", "declaró", "enseñaba", "afirmaba", "negaba", "recordaba"]
EXPERT_BOOK_OBJECTS = [
    "que la fe era el fundamento de la ley",
    "que el purgatorio estaba en cuestión",
    "que la confesión había de hacerse entera",
    "que la palabra estaba escrita en romance",
    "que la penitencia era pública",
    "que el juramento valía ante el juez",
]


@dataclass
class SentencePlan:
    """One composed sentence: normalized parts with entity markers."""

    parts: list[tuple[str, str | None]]  # (normalized text, entity_id or None)
    label: str | None = None

    def normalized(self) -> str:
        return "".join(text for text, _ in self.parts)

    def raw(self) -> str:
        out = []
        for text, entity_id in self.parts:
            if entity_id is None:
                for modern, archaic in _ARCHAIZE.items():
                    text = text.replace(modern, archaic)
            out.append(text)
        return "".join(out)

    def entity_spans(self) -> list[tuple[int, int, str]]:
        spans = []
        offset = 0
        for text, entity_id in self.parts:
            if entity_id is not None:
                spans.append((offset, offset + len(text), entity_id))
            offset += len(text)
        return spans


@dataclass
class FixtureCorpus:
    out_dir: Path
    documents_path: Path
    annotations_path: Path
    rulesets_path: Path
    # Predicted sentence_id (doc_id:sN, segmentation order) -> relation label.
    sentence_labels: dict[str, str]
    counts: dict[str, int] = field(default_factory=dict)


class _EntityIds:
    def __init__(self) -> None:
        self.n = 0

    def next(self) -> str:
        self.n += 1
        return f"e{self.n}"


def _pair_sentence(rng: np.random.Generator, ids: _EntityIds, label: str) -> SentencePlan:
    a = str(rng.choice(PEOPLE))
    if label == LABEL_A:
        b = str(rng.choice(PLACES))
        return SentencePlan(
            parts=[
                ("El dicho ", None),
                (a, ids.next()),
                (" dijo que estaba de camino a ", None),
                (b, ids.next()),
                (".", None),
            ],
            label=label,
        )
    b = str(rng.choice([p for p in PEOPLE if p != a]))
    return SentencePlan(
        parts=[
            ("El dicho ", None),
            (a, ids.next()),
            (" dijo que escribió una carta a ", None),
            (b, ids.next()),
            (".", None),
        ],
        label=label,
    )


def _anaphoric_sentence(rng: np.random.Generator, ids: _EntityIds, label: str) -> SentencePlan:
    name = str(rng.choice(PEOPLE))
    return SentencePlan(
        parts=[
            ("Ante mí pasó el notario ", None),
            (name, ids.next()),
            (" y dijo que estaba presente.", None),
        ],
        label=label,
    )


def _triple_sentence(rng: np.random.Generator, ids: _EntityIds, label: str) -> SentencePlan:
    a, b, c = (str(n) for n in rng.choice(PEOPLE, size=3, replace=False))
    return SentencePlan(
        parts=[
            ("El dicho ", None),
            (a, ids.next()),
            (" llevó a ", None),
            (b, ids.next()),
            (" a casa de ", None),
            (c, ids.next()),
            (" y dijo que estaba contento.", None),
        ],
        label=label,
    )


def _crowded_sentence(ids: _EntityIds, n_entities: int) -> SentencePlan:
    parts: list[tuple[str, str | None]] = [("Estaban presentes ", None)]
    for i in range(n_entities):
        name = PEOPLE[i % len(PEOPLE)]
        if i:
            parts.append((" y ", None))
        parts.append((name, ids.next()))
    parts.append((" cuando el tribunal dijo que estaba en sesión.", None))
    return SentencePlan(parts=parts, label=None)


def _expert_book_sentences(rng: np.random.Generator, n: int) -> list[str]:
    out = []
    for _ in range(n):
        opener = str(rng.choice(EXPERT_BOOK_OPENERS))
        verb = str(rng.choice(EXPERT_BOOK_VERBS))
        obj = str(rng.choice(EXPERT_BOOK_OBJECTS))
        out.append(f"{opener} {verb} {obj}.")
    return out


def build_fixture_corpus(
    out_dir: str | Path,
    *,
    n_pair_sentences: int = 12,
    n_anaphoric: int = 4,
    n_triple: int = 3,
    n_empty: int = 2,
    oversized_entity_counts: Iterable[int] = (15, 4),
    n_expert_sentences: int = 50,
    seed: int = 0,
) -> FixtureCorpus:
    """Write documents.jsonl, annotations.jsonl, and rulesets.yaml.

    The target document interleaves pair / anaphoric / triple / entity-free
    sentences; relation labels alternate between the two benchmark classes
    in generation order.  Expert-book documents carry no annotations.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    ids = _EntityIds()
    labels = [LABEL_A, LABEL_B]

    plans: list[SentencePlan] = []
    label_i = 0
    for i in range(n_pair_sentences):
        plans.append(_pair_sentence(rng, ids, labels[label_i % 2]))
        label_i += 1
    for i in range(n_anaphoric):
        plans.append(_anaphoric_sentence(rng, ids, labels[label_i % 2]))
        label_i += 1
    for i in range(n_triple):
        plans.append(_triple_sentence(rng, ids, labels[label_i % 2]))
        label_i += 1
    for i in range(n_empty):
        plans.append(SentencePlan(parts=[(FILLER_SENTENCES[i % len(FILLER_SENTENCES)], None)]))
    for count in oversized_entity_counts:
        plans.append(_crowded_sentence(ids, count))

    doc_id = "trial"
    normalized_parts: list[str] = []
    annotations: list[dict[str, Any]] = []
    sentence_labels: dict[str, str] = {}
    offset = 0
    for idx, plan in enumerate(plans):
        if idx:
            normalized_parts.append(" ")
            offset += 1
        for start, end, entity_id in plan.entity_spans():
            annotations.append(
                {
                    "doc_id": doc_id,
                    "start": offset + start,
                    "end": offset + end,
                    "entity_id": entity_id,
                }
            )
        if plan.label is not None:
            sentence_labels[f"{doc_id}:s{idx}"] = plan.label
        text = plan.normalized()
        normalized_parts.append(text)
        offset += len(text)
    raw_text = " ".join(plan.raw() for plan in plans)

    documents = [
        {
            "doc_id": doc_id,
            "title": "Proceso sintético",
            "source_kind": "target_text",
            "raw_text": raw_text,
        }
    ]
    book_sentences = _expert_book_sentences(rng, n_expert_sentences)
    documents.append(
        {
            "doc_id": "doctrina",
            "title": "Doctrina sintética",
            "source_kind": "expert_book",
            "raw_text": " ".join(
                s.replace("dijo", "dixo").replace("estaba", "estaua") for s in book_sentences
            ),
        }
    )

    documents_path = jsonl.write_records(out_dir / "documents.jsonl", documents)
    annotations_path = jsonl.write_records(out_dir / "annotations.jsonl", annotations)
    rulesets_path = out_dir / "rulesets.yaml"
    rulesets_path.write_text(
        yaml.safe_dump(
            {
                "normalization": {
                    "rules": [
                        {"pattern": archaic, "replacement": modern}
                        for archaic, modern in NORMALIZATION_RULES
                    ]
                },
                "segmentation": {
                    "terminators": [
                        {"char": ".", "keep": True},
                        {"char": ";", "keep": False},
                    ],
                    "abbreviations": ["fol.", "cap."],
                },
            },
            allow_unicode=True,
            sort_keys=True,
        ),
        encoding="utf-8",
    )
    return FixtureCorpus(
        out_dir=out_dir,
        documents_path=documents_path,
        annotations_path=annotations_path,
        rulesets_path=rulesets_path,
        sentence_labels=sentence_labels,
        counts={
            "pair": n_pair_sentences,
            "anaphoric": n_anaphoric,
            "triple": n_triple,
            "empty": n_empty,
        },
    )


def run_vocab_texts(run_dir: str | Path) -> list[str]:
    """Texts a whitespace vocab must cover to embed a composed run: chunk
    and sentence contents, entity surfaces, and the template literals."""
    from .templates import builtin_templates

    run_dir = Path(run_dir)
    texts = [rec["text"] for rec in jsonl.read_records(run_dir / "chunks.jsonl")]
    for rec in jsonl.read_records(run_dir / "sentences.jsonl"):
        texts.append(rec["text"])
        texts.extend(e["surface"] for e in rec["entities"])
    for template in builtin_templates():
        texts.extend(seg.lit for seg in template.segments if seg.lit is not None)
    return texts


def build_demo_run(
    root: str | Path,
    *,
    run_id: str = "run",
    seed: int = 0,
    corpus_kwargs: dict[str, Any] | None = None,
):
    """Full eight-stage pipeline over a fixture corpus, under ``root``.

    Writes corpus inputs, ``config.yaml``, a registry with a tiny base and
    its biased child, and a completed run directory.  Returns
    (manifest, config, fixture).
    """
    from .biasing import ModelRegistry
    from .encoders import TinyMlmEncoder, WhitespaceVocab
    from .pipeline import RunManifest, execute_stage

    root = Path(root)
    fixture = build_fixture_corpus(root / "corpus", seed=seed, **(corpus_kwargs or {}))
    labels_path = root / "corpus" / "labels.jsonl"
    config: dict[str, Any] = {
        "registry": str(root / "registry"),
        "run_root": str(root / "runs"),
        "corpus": {
            "documents": str(fixture.documents_path),
            "annotations": str(fixture.annotations_path),
            "rulesets": str(fixture.rulesets_path),
            "pair_entity_limit": 3,
            "chunk_max_tokens": 64,
        },
        "biasing": {
            "base_model": "tiny-base",
            "learning_rate": 5e-5,
            "epochs": 5,
            "masking_probability": 0.15,
            "seed": 7,
            "batch_size": 8,
            "output_model": "tiny-biased",
        },
        "prompting": {
            "templates": ["P1", "P_anaphoric"],
            "models": ["tiny-base", "tiny-biased"],
            "top_k": 5,
        },
        "clustering": {"k": 2, "seed": 11},
        "evaluation": {"positive_label": LABEL_A, "labels": str(labels_path)},
        "serve": {"label_set": [LABEL_A, LABEL_B], "journal": "journal.jsonl"},
    }
    (root / "config.yaml").write_text(
        yaml.safe_dump(config, allow_unicode=True, sort_keys=True), encoding="utf-8"
    )
    manifest = RunManifest.load_or_create(root / "runs" / run_id, run_id)
    execute_stage("compose", manifest, config)
    labels = derive_instance_labels(
        manifest.run_dir / "instances.jsonl", fixture.sentence_labels
    )
    write_labels_file(labels_path, labels)
    registry = ModelRegistry(root / "registry")
    if "tiny-base" not in registry:
        vocab = WhitespaceVocab.from_texts(run_vocab_texts(manifest.run_dir))
        registry.register(
            TinyMlmEncoder("tiny-base", vocab, hidden_size=32, num_layers=2, seed=1)
        )
    for stage in ("stats", "bias", "prompt", "embed", "cluster", "eval", "report"):
        execute_stage(stage, manifest, config)
    return manifest, config, fixture


def derive_instance_labels(
    instances_path: str | Path, sentence_labels: dict[str, str]
) -> dict[str, str]:
    """Gold label per generated instance, inherited from its sentence."""
    labels = {}
    for rec in jsonl.read_records(instances_path):
        label = sentence_labels.get(rec["sentence_id"])
        if label is not None:
            labels[rec["instance_id"]] = label
    return labels


def write_labels_file(path: str | Path, labels: dict[str, str]) -> Path:
    return jsonl.write_records(
        path,
        (
            {"instance_id": instance_id, "label": label}
            for instance_id, label in sorted(labels.items())
        ),
    )
