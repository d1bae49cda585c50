"""Corpus composition for historical Spanish documents.

Covers the preparation steps that precede any model work: rule-based text
normalization (modernizing contractions like ``estaua`` -> ``estaba``),
punctuation-driven sentence segmentation, joining expert entity annotations
to segmented sentences, corpus statistics, relation-instance generation,
and packing expert-book text into token-budgeted chunks for encoder biasing.

All functions here are pure and deterministic given their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .errors import AnnotationError, ConfigurationError

TARGET_TEXT = "target_text"
EXPERT_BOOK = "expert_book"
SOURCE_KINDS = (TARGET_TEXT, EXPERT_BOOK)

PAIR = "pair"
ANAPHORIC = "anaphoric"


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormalizationRule:
    """One literal substring replacement, e.g. ``estaua`` -> ``estaba``."""

    pattern: str
    replacement: str

    def __post_init__(self) -> None:
        if not self.pattern:
            raise ConfigurationError("normalization rule has an empty pattern")


def validate_ruleset(rules: Sequence[NormalizationRule]) -> None:
    """Reject rulesets that cannot be applied idempotently.

    Two failure modes are caught statically:

    * duplicate patterns with different replacements (ambiguous), and
    * a replacement that contains another rule's pattern (re-applying the
      ruleset to its own output would keep rewriting).
    """
    seen: dict[str, NormalizationRule] = {}
    for rule in rules:
        prior = seen.get(rule.pattern)
        if prior is not None and prior.replacement != rule.replacement:
            raise ConfigurationError(
                f"conflicting rules for pattern {rule.pattern!r}: "
                f"{prior.replacement!r} vs {rule.replacement!r}"
            )
        seen[rule.pattern] = rule
    for rule in rules:
        for other in rules:
            if other.pattern == other.replacement:
                continue  # identity rule cannot destabilize output
            if other.pattern in rule.replacement:
                raise ConfigurationError(
                    f"rule ({rule.pattern!r} -> {rule.replacement!r}) conflicts with "
                    f"rule ({other.pattern!r} -> {other.replacement!r}): the replacement "
                    "re-triggers normalization"
                )


@dataclass
class Document:
    doc_id: str
    title: str
    source_kind: str
    raw_text: str
    normalized_text: str = ""
    # (start, end) span of raw_text that was replaced, and the replacement.
    normalization_log: list[tuple[tuple[int, int], str]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.source_kind not in SOURCE_KINDS:
            raise ConfigurationError(
                f"unknown source_kind {self.source_kind!r}; expected one of {SOURCE_KINDS}"
            )


def normalize_document(
    raw: str,
    rules: Sequence[NormalizationRule],
    *,
    doc_id: str,
    title: str = "",
    source_kind: str = TARGET_TEXT,
) -> Document:
    """Apply the ruleset to ``raw``, scanning left to right.

    At each position the longest matching pattern wins (first rule in the
    list on a length tie); the scan resumes after the replacement, so a
    replacement is never rewritten within a single pass.  The result is
    verified to be a fixed point: re-applying the ruleset must change
    nothing, otherwise the ruleset itself is broken.
    """
    validate_ruleset(rules)
    pieces: list[str] = []
    log: list[tuple[tuple[int, int], str]] = []
    i = 0
    n = len(raw)
    while i < n:
        best: NormalizationRule | None = None
        for rule in rules:
            if raw.startswith(rule.pattern, i):
                if best is None or len(rule.pattern) > len(best.pattern):
                    best = rule
        if best is None:
            pieces.append(raw[i])
            i += 1
        else:
            end = i + len(best.pattern)
            if best.replacement != best.pattern:
                log.append(((i, end), best.replacement))
            pieces.append(best.replacement)
            i = end
    normalized = "".join(pieces)
    for rule in rules:
        if rule.pattern != rule.replacement and rule.pattern in normalized:
            raise ConfigurationError(
                f"ruleset is not idempotent: pattern {rule.pattern!r} still occurs "
                "after normalization"
            )
    return Document(
        doc_id=doc_id,
        title=title,
        source_kind=source_kind,
        raw_text=raw,
        normalized_text=normalized,
        normalization_log=log,
    )


# ---------------------------------------------------------------------------
# Segmentation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TerminatorRule:
    """A sentence-ending character and whether it stays in the sentence text.

    Historical semicolons marked a pause for reading aloud rather than a
    modern clause boundary, so by default ';' splits but is dropped, while
    '.' splits and is kept as ordinary sentence-final punctuation.
    """

    char: str
    keep: bool = True

    def __post_init__(self) -> None:
        if len(self.char) != 1:
            raise ConfigurationError(f"terminator must be a single character, got {self.char!r}")


DEFAULT_TERMINATORS = (TerminatorRule(".", keep=True), TerminatorRule(";", keep=False))


@dataclass(frozen=True)
class SegmentationRules:
    terminators: tuple[TerminatorRule, ...] = DEFAULT_TERMINATORS
    # Dotted abbreviations ("fol.", "sr.") whose '.' never ends a sentence.
    abbreviations: tuple[str, ...] = ()

    def terminator_map(self) -> dict[str, TerminatorRule]:
        mapping: dict[str, TerminatorRule] = {}
        for rule in self.terminators:
            if rule.char in mapping:
                raise ConfigurationError(f"duplicate terminator rule for {rule.char!r}")
            mapping[rule.char] = rule
        return mapping

    def abbreviation_set(self) -> frozenset[str]:
        return frozenset(a.lower() for a in self.abbreviations)


@dataclass(frozen=True)
class EntityMention:
    entity_id: str
    start: int
    end: int
    surface: str

    def __post_init__(self) -> None:
        if not (0 <= self.start < self.end):
            raise AnnotationError(
                f"entity {self.entity_id!r} has an invalid span ({self.start}, {self.end})"
            )

    def span(self) -> tuple[int, int]:
        return (self.start, self.end)

    def contains(self, other: "EntityMention") -> bool:
        return self.start <= other.start and other.end <= self.end


@dataclass
class AnnotatedSentence:
    sentence_id: str
    doc_id: str
    text: str
    char_range: tuple[int, int]
    entities: list[EntityMention] = field(default_factory=list)

    def validate(self) -> None:
        spans = [e.span() for e in self.entities]
        if spans != sorted(spans):
            raise AnnotationError(f"entities of {self.sentence_id} are not in text order")
        for e in self.entities:
            if e.end > len(self.text):
                raise AnnotationError(
                    f"entity {e.entity_id!r} exceeds sentence {self.sentence_id} bounds"
                )
            if self.text[e.start:e.end] != e.surface:
                raise AnnotationError(
                    f"entity {e.entity_id!r} surface {e.surface!r} != text slice "
                    f"{self.text[e.start:e.end]!r} in sentence {self.sentence_id}"
                )


def segment_sentences(
    doc: Document, rules: SegmentationRules | None = None
) -> list[AnnotatedSentence]:
    """Split ``doc.normalized_text`` at terminator characters.

    Returns sentences with empty entity lists; ``char_range`` offsets index
    into the normalized text and always satisfy
    ``text == normalized_text[start:end]``.  Gaps between ranges contain only
    whitespace and dropped terminators, so concatenating sentence texts with
    their terminators reconstructs the document modulo whitespace.
    """
    rules = rules or SegmentationRules()
    terminators = rules.terminator_map()
    abbreviations = rules.abbreviation_set()
    text = doc.normalized_text

    sentences: list[AnnotatedSentence] = []

    def emit(start: int, end: int) -> None:
        while start < end and text[start].isspace():
            start += 1
        while end > start and text[end - 1].isspace():
            end -= 1
        if start >= end:
            return
        if all(ch in terminators or ch.isspace() for ch in text[start:end]):
            return  # nothing but punctuation (e.g. a run of terminators)
        sid = f"{doc.doc_id}:s{len(sentences)}"
        sentences.append(
            AnnotatedSentence(
                sentence_id=sid,
                doc_id=doc.doc_id,
                text=text[start:end],
                char_range=(start, end),
            )
        )

    seg_start = 0
    i = 0
    while i < len(text):
        rule = terminators.get(text[i])
        if rule is None:
            i += 1
            continue
        if text[i] == "." and _preceding_word(text, i).lower() + "." in abbreviations:
            i += 1
            continue
        emit(seg_start, i + 1 if rule.keep else i)
        seg_start = i + 1
        i += 1
    emit(seg_start, len(text))
    return sentences


def _preceding_word(text: str, pos: int) -> str:
    j = pos
    while j > 0 and not text[j - 1].isspace():
        j -= 1
    return text[j:pos]


# ---------------------------------------------------------------------------
# Annotation join
# ---------------------------------------------------------------------------

def attach_entities(
    sentences: Sequence[AnnotatedSentence],
    annotations: Iterable[tuple[tuple[int, int], str]],
) -> list[AnnotatedSentence]:
    """Join document-level entity spans onto segmented sentences.

    Annotation spans are offsets into the document's normalized text (the
    text the expert team annotated).  Each span must fall entirely inside
    one sentence; offsets are re-based to sentence-local coordinates.
    """
    result = [replace(s, entities=list(s.entities)) for s in sentences]
    for (start, end), entity_id in annotations:
        if start >= end:
            raise AnnotationError(f"annotation {entity_id!r} has empty span ({start}, {end})")
        hits = [s for s in result if start < s.char_range[1] and s.char_range[0] < end]
        if not hits:
            raise AnnotationError(
                f"annotation {entity_id!r} at ({start}, {end}) falls outside every sentence"
            )
        if len(hits) > 1:
            ids = ", ".join(s.sentence_id for s in hits)
            raise AnnotationError(
                f"annotation {entity_id!r} at ({start}, {end}) spans a sentence "
                f"boundary (overlaps {ids})"
            )
        sent = hits[0]
        if start < sent.char_range[0] or end > sent.char_range[1]:
            raise AnnotationError(
                f"annotation {entity_id!r} at ({start}, {end}) extends beyond "
                f"sentence {sent.sentence_id} range {sent.char_range}"
            )
        local_start = start - sent.char_range[0]
        local_end = end - sent.char_range[0]
        sent.entities.append(
            EntityMention(
                entity_id=entity_id,
                start=local_start,
                end=local_end,
                surface=sent.text[local_start:local_end],
            )
        )
    for sent in result:
        sent.entities.sort(key=lambda e: (e.start, e.end, e.entity_id))
        sent.validate()
    return result


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

@dataclass
class EntityHistogram:
    counts: dict[int, int]
    total_sentences: int

    def percentile(self, p: float) -> int:
        """Nearest-rank percentile of the per-sentence entity counts."""
        if not 0 <= p <= 100:
            raise ValueError(f"percentile must be in [0, 100], got {p}")
        if self.total_sentences == 0:
            raise ValueError("percentile of an empty histogram")
        rank = max(1, int(np.ceil(p / 100.0 * self.total_sentences)))
        seen = 0
        for k in sorted(self.counts):
            seen += self.counts[k]
            if seen >= rank:
                return k
        return max(self.counts)  # pragma: no cover - unreachable by construction


def entity_histogram(sentences: Sequence[AnnotatedSentence]) -> EntityHistogram:
    counts: dict[int, int] = {}
    for s in sentences:
        k = len(s.entities)
        counts[k] = counts.get(k, 0) + 1
    return EntityHistogram(counts=counts, total_sentences=len(sentences))


@dataclass(frozen=True)
class WordStatsRow:
    title: str
    doc_id: str
    mean: float
    std: float
    median: float
    total_words: int
    total_sentences: int


@dataclass
class WordStats:
    rows: list[WordStatsRow]


def word_stats(
    documents: Sequence[Document], sentences: Sequence[AnnotatedSentence]
) -> WordStats:
    """Per-document distribution of whitespace-delimited words per sentence.

    The historical report this mirrors had an ambiguous "Total" column, so
    both candidate readings are emitted: total words and total sentences.
    """
    by_doc: dict[str, list[int]] = {d.doc_id: [] for d in documents}
    for s in sentences:
        if s.doc_id in by_doc:
            by_doc[s.doc_id].append(len(s.text.split()))
    rows = []
    for doc in documents:
        lengths = by_doc[doc.doc_id]
        if lengths:
            arr = np.asarray(lengths, dtype=np.float64)
            mean = float(arr.mean())
            std = float(arr.std(ddof=0))
            median = float(np.median(arr))
        else:
            mean = std = median = 0.0
        rows.append(
            WordStatsRow(
                title=doc.title,
                doc_id=doc.doc_id,
                mean=mean,
                std=std,
                median=median,
                total_words=int(sum(lengths)),
                total_sentences=len(lengths),
            )
        )
    return WordStats(rows=rows)


def filter_by_entity_count(
    sentences: Sequence[AnnotatedSentence], min_k: int, max_k: int | None = None
) -> list[AnnotatedSentence]:
    if min_k < 0:
        raise ValueError(f"min_k must be non-negative, got {min_k}")
    if max_k is not None and max_k < min_k:
        raise ValueError(f"max_k ({max_k}) < min_k ({min_k})")
    return [
        s
        for s in sentences
        if min_k <= len(s.entities) and (max_k is None or len(s.entities) <= max_k)
    ]


# ---------------------------------------------------------------------------
# Relation instances
# ---------------------------------------------------------------------------

@dataclass
class RelationInstance:
    instance_id: str
    sentence_id: str
    kind: str
    e1: EntityMention
    e2: EntityMention | None = None
    gold_label: str | None = None
    # True when one mention's span contains the other's (nested entities).
    nested: bool = False

    def validate(self) -> None:
        if self.kind == ANAPHORIC:
            if self.e2 is not None:
                raise ValueError(f"anaphoric instance {self.instance_id} carries an e2")
        elif self.kind == PAIR:
            if self.e2 is None:
                raise ValueError(f"pair instance {self.instance_id} is missing e2")
            if (self.e1.start, self.e1.end) >= (self.e2.start, self.e2.end):
                raise ValueError(f"instance {self.instance_id}: e1 must precede e2 in text order")
        else:
            raise ValueError(f"unknown instance kind {self.kind!r}")


def generate_instances(
    sentence: AnnotatedSentence, *, pair_entity_limit: int | None = 3
) -> list[RelationInstance]:
    """Turn one annotated sentence into relation instances.

    A single isolated entity relates to the sentence itself (anaphoric
    instance); 2..``pair_entity_limit`` entities yield every unordered
    mention pair in text order (C(n,2) pairs, so 3-entity sentences triple).
    Sentences above the limit are skipped: the pairing strategy degrades
    beyond 3 entities because distant mentions rarely share a relation.
    """
    entities = sorted(sentence.entities, key=lambda e: (e.start, e.end, e.entity_id))
    n = len(entities)
    if n == 0:
        return []
    if n == 1:
        e = entities[0]
        inst = RelationInstance(
            instance_id=f"{sentence.sentence_id}:a:{e.start}-{e.end}",
            sentence_id=sentence.sentence_id,
            kind=ANAPHORIC,
            e1=e,
        )
        inst.validate()
        return [inst]
    if pair_entity_limit is not None and n > pair_entity_limit:
        return []
    result = []
    for a, b in combinations(entities, 2):
        inst = RelationInstance(
            instance_id=f"{sentence.sentence_id}:p:{a.start}-{a.end}:{b.start}-{b.end}",
            sentence_id=sentence.sentence_id,
            kind=PAIR,
            e1=a,
            e2=b,
            nested=a.contains(b) or b.contains(a),
        )
        inst.validate()
        result.append(inst)
    return result


# ---------------------------------------------------------------------------
# Biasing chunks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BiasingChunk:
    chunk_id: str
    doc_id: str
    char_range: tuple[int, int]
    text: str


@dataclass(frozen=True)
class ChunkWarning:
    doc_id: str
    char_range: tuple[int, int]
    message: str


def build_biasing_chunks(
    documents: Sequence[Document],
    max_tokens_per_chunk: int,
    token_counter: Callable[[str], int],
    *,
    segmentation: SegmentationRules | None = None,
) -> tuple[list[BiasingChunk], list[ChunkWarning]]:
    """Pack normalized document text into token-budgeted training chunks.

    Chunks are contiguous slices of each document's normalized text cut at
    sentence starts, so concatenating a document's chunks reproduces its
    normalized text exactly.  A single sentence over budget is hard-split on
    character boundaries and reported as a warning.
    """
    if max_tokens_per_chunk < 1:
        raise ConfigurationError("max_tokens_per_chunk must be >= 1")
    chunks: list[BiasingChunk] = []
    warnings: list[ChunkWarning] = []
    for doc in documents:
        text = doc.normalized_text
        if not text:
            continue
        segments = segment_sentences(doc, segmentation)
        cuts = [s.char_range[0] for s in segments[1:]] + [len(text)]
        prev = 0
        pieces: list[tuple[int, int]] = []
        for cut in cuts:
            if cut > prev:
                pieces.append((prev, cut))
                prev = cut
        if prev < len(text):
            pieces.append((prev, len(text)))

        def flush(start: int, end: int) -> None:
            chunks.append(
                BiasingChunk(
                    chunk_id=f"{doc.doc_id}:c{len(chunks)}",
                    doc_id=doc.doc_id,
                    char_range=(start, end),
                    text=text[start:end],
                )
            )

        cur_start: int | None = None
        cur_end = 0
        for start, end in pieces:
            if token_counter(text[start:end]) > max_tokens_per_chunk:
                if cur_start is not None:
                    flush(cur_start, cur_end)
                    cur_start = None
                warnings.append(
                    ChunkWarning(
                        doc_id=doc.doc_id,
                        char_range=(start, end),
                        message="sentence exceeds chunk token budget; hard-split",
                    )
                )
                for sub_start, sub_end in _hard_split(
                    text, start, end, max_tokens_per_chunk, token_counter
                ):
                    flush(sub_start, sub_end)
                continue
            if cur_start is None:
                cur_start, cur_end = start, end
            elif token_counter(text[cur_start:end]) <= max_tokens_per_chunk:
                cur_end = end
            else:
                flush(cur_start, cur_end)
                cur_start, cur_end = start, end
        if cur_start is not None:
            flush(cur_start, cur_end)
    return chunks, warnings


def _hard_split(
    text: str,
    start: int,
    end: int,
    budget: int,
    token_counter: Callable[[str], int],
) -> list[tuple[int, int]]:
    """Cut ``text[start:end]`` into budget-sized spans, preferring whitespace."""
    spans: list[tuple[int, int]] = []
    pos = start
    while pos < end:
        lo, hi = pos + 1, end
        best = pos + 1
        while lo <= hi:
            mid = (lo + hi) // 2
            if token_counter(text[pos:mid]) <= budget:
                best = mid
                lo = mid + 1
            else:
                hi = mid - 1
        if token_counter(text[pos:best]) > budget:
            raise ConfigurationError(
                f"token budget {budget} cannot fit even one character of "
                f"document span ({pos}, {end})"
            )
        if best < end:
            ws = text.rfind(" ", pos + 1, best + 1)
            if ws > pos:
                best = ws
        spans.append((pos, best))
        pos = best
    return spans


# ---------------------------------------------------------------------------
# Record (de)serialization for newline-delimited artifact files
# ---------------------------------------------------------------------------

def document_to_record(doc: Document) -> dict[str, Any]:
    return {
        "doc_id": doc.doc_id,
        "title": doc.title,
        "source_kind": doc.source_kind,
        "raw_text": doc.raw_text,
        "normalized_text": doc.normalized_text,
        "normalization_log": [
            {"start": s, "end": e, "replacement": r} for (s, e), r in doc.normalization_log
        ],
    }


def document_from_record(rec: dict[str, Any]) -> Document:
    return Document(
        doc_id=rec["doc_id"],
        title=rec.get("title", ""),
        source_kind=rec.get("source_kind", TARGET_TEXT),
        raw_text=rec.get("raw_text", ""),
        normalized_text=rec.get("normalized_text", ""),
        normalization_log=[
            ((entry["start"], entry["end"]), entry["replacement"])
            for entry in rec.get("normalization_log", [])
        ],
    )


def _entity_to_record(e: EntityMention) -> dict[str, Any]:
    return {"entity_id": e.entity_id, "start": e.start, "end": e.end, "surface": e.surface}


def _entity_from_record(rec: dict[str, Any]) -> EntityMention:
    return EntityMention(
        entity_id=rec["entity_id"], start=rec["start"], end=rec["end"], surface=rec["surface"]
    )


def sentence_to_record(s: AnnotatedSentence) -> dict[str, Any]:
    return {
        "sentence_id": s.sentence_id,
        "doc_id": s.doc_id,
        "text": s.text,
        "char_range": list(s.char_range),
        "entities": [_entity_to_record(e) for e in s.entities],
    }


def sentence_from_record(rec: dict[str, Any]) -> AnnotatedSentence:
    return AnnotatedSentence(
        sentence_id=rec["sentence_id"],
        doc_id=rec["doc_id"],
        text=rec["text"],
        char_range=tuple(rec["char_range"]),
        entities=[_entity_from_record(e) for e in rec["entities"]],
    )


def instance_to_record(inst: RelationInstance) -> dict[str, Any]:
    return {
        "instance_id": inst.instance_id,
        "sentence_id": inst.sentence_id,
        "kind": inst.kind,
        "e1": _entity_to_record(inst.e1),
        "e2": _entity_to_record(inst.e2) if inst.e2 is not None else None,
        "gold_label": inst.gold_label,
        "nested": inst.nested,
    }


def instance_from_record(rec: dict[str, Any]) -> RelationInstance:
    return RelationInstance(
        instance_id=rec["instance_id"],
        sentence_id=rec["sentence_id"],
        kind=rec["kind"],
        e1=_entity_from_record(rec["e1"]),
        e2=_entity_from_record(rec["e2"]) if rec.get("e2") else None,
        gold_label=rec.get("gold_label"),
        nested=bool(rec.get("nested", False)),
    )


def chunk_to_record(c: BiasingChunk) -> dict[str, Any]:
    return {
        "chunk_id": c.chunk_id,
        "doc_id": c.doc_id,
        "char_range": list(c.char_range),
        "text": c.text,
    }


def chunk_from_record(rec: dict[str, Any]) -> BiasingChunk:
    return BiasingChunk(
        chunk_id=rec["chunk_id"],
        doc_id=rec["doc_id"],
        char_range=tuple(rec["char_range"]),
        text=rec["text"],
    )
