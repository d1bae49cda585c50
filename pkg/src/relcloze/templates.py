"""Cloze prompt templates for relation extraction in Spanish.

A template is an ordered list of literal words and slots.  Six templates are
built in: the bare juxtaposition prompt, three gender-neutral scaffolds, two
grammatically gendered scaffolds ("es la ..." / "es el ..."), and an
anaphoric scaffold that relates an isolated entity to the preceding sentence
through a phantom entity ("la frase anterior").

Filled prompts render the mask and separator symbolically ("[MASK]",
"[SEP]") by default; backends substitute their own literal token strings at
tokenization time.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any, Callable, Sequence

from .corpus import ANAPHORIC, PAIR, AnnotatedSentence, RelationInstance
from .errors import ConfigurationError, PromptBudgetError

SENTENCE = "SENTENCE"
E1 = "E1"
E2 = "E2"
MASK = "MASK"
SEP = "SEP"
SLOTS = (SENTENCE, E1, E2, MASK, SEP)

NEUTRAL = "neutral"
FEMININE = "feminine"
MASCULINE = "masculine"
GENDER_MODES = (NEUTRAL, FEMININE, MASCULINE)

DEFAULT_MASK_TOKEN = "[MASK]"
DEFAULT_SEP_TOKEN = "[SEP]"


@dataclass(frozen=True)
class Segment:
    """Either a literal string or a slot name; exactly one is set."""

    lit: str | None = None
    slot: str | None = None

    def __post_init__(self) -> None:
        if (self.lit is None) == (self.slot is None):
            raise ConfigurationError("segment must set exactly one of lit/slot")
        if self.slot is not None and self.slot not in SLOTS:
            raise ConfigurationError(f"unknown slot {self.slot!r}; expected one of {SLOTS}")


def lit(text: str) -> Segment:
    return Segment(lit=text)


def slot(name: str) -> Segment:
    return Segment(slot=name)


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    segments: tuple[Segment, ...]
    gender_mode: str = NEUTRAL
    arity: str = PAIR

    def __post_init__(self) -> None:
        if self.gender_mode not in GENDER_MODES:
            raise ConfigurationError(f"unknown gender_mode {self.gender_mode!r}")
        if self.arity not in (PAIR, ANAPHORIC):
            raise ConfigurationError(f"unknown arity {self.arity!r}")
        slots = [s.slot for s in self.segments if s.slot is not None]
        if slots.count(MASK) != 1:
            raise ConfigurationError(
                f"template {self.template_id}: exactly one MASK slot required, "
                f"found {slots.count(MASK)}"
            )
        if not self.segments or self.segments[-1].slot != SEP or slots.count(SEP) != 1:
            raise ConfigurationError(
                f"template {self.template_id}: exactly one trailing SEP slot required"
            )
        if self.arity == PAIR and (E1 not in slots or E2 not in slots):
            raise ConfigurationError(
                f"pair template {self.template_id} must use both E1 and E2"
            )
        if self.arity == ANAPHORIC and (E1 not in slots or E2 in slots):
            raise ConfigurationError(
                f"anaphoric template {self.template_id} must use E1 and never E2"
            )


def builtin_templates() -> list[PromptTemplate]:
    """The six built-in scaffolds, in canonical order."""
    relacion = [lit("la relación entre"), slot(E1), lit("y"), slot(E2)]
    return [
        PromptTemplate(
            "P0",
            (slot(SENTENCE), slot(E1), slot(MASK), slot(E2), slot(SEP)),
        ),
        PromptTemplate(
            "P1",
            (slot(SENTENCE), *relacion, lit("es una relación de"), slot(MASK), slot(SEP)),
        ),
        PromptTemplate(
            "P2",
            (slot(SENTENCE), *relacion, lit("es"), slot(MASK), slot(SEP)),
        ),
        PromptTemplate(
            "P3",
            (slot(SENTENCE), *relacion, lit("es la"), slot(MASK), slot(SEP)),
            gender_mode=FEMININE,
        ),
        PromptTemplate(
            "P4",
            (slot(SENTENCE), *relacion, lit("es el"), slot(MASK), slot(SEP)),
            gender_mode=MASCULINE,
        ),
        PromptTemplate(
            "P_anaphoric",
            (
                slot(SENTENCE),
                lit("la relación entre"),
                slot(E1),
                lit("y la frase anterior es una relación de"),
                slot(MASK),
                slot(SEP),
            ),
            arity=ANAPHORIC,
        ),
    ]


def builtin_template_map() -> dict[str, PromptTemplate]:
    return {t.template_id: t for t in builtin_templates()}


@dataclass(frozen=True)
class FilledPrompt:
    instance_id: str
    template_id: str
    text: str
    # Sentence portion of ``text`` (everything before the scaffold); kept so
    # the truncation policy knows which part it may shorten.
    sentence_text: str
    truncated: bool = False
    dropped: bool = False

    def scaffold(self) -> str:
        if not self.sentence_text:
            return self.text
        return self.text[len(self.sentence_text) + 1 :]


def fill_template(
    template: PromptTemplate,
    instance: RelationInstance,
    sentence: AnnotatedSentence,
    *,
    mask_token: str = DEFAULT_MASK_TOKEN,
    sep_token: str = DEFAULT_SEP_TOKEN,
) -> FilledPrompt:
    """Substitute slots and join all non-empty parts with single spaces."""
    if template.arity != instance.kind:
        raise ConfigurationError(
            f"template {template.template_id} has arity {template.arity!r} but "
            f"instance {instance.instance_id} is {instance.kind!r}"
        )
    if instance.sentence_id != sentence.sentence_id:
        raise ConfigurationError(
            f"instance {instance.instance_id} does not belong to sentence "
            f"{sentence.sentence_id}"
        )
    if not instance.e1.surface or (instance.e2 is not None and not instance.e2.surface):
        raise ConfigurationError(f"instance {instance.instance_id} has an empty entity surface")

    values = {
        SENTENCE: sentence.text,
        E1: instance.e1.surface,
        E2: instance.e2.surface if instance.e2 is not None else "",
        MASK: mask_token,
        SEP: sep_token,
    }
    parts = []
    for seg in template.segments:
        part = seg.lit if seg.lit is not None else values[seg.slot]
        if part:
            parts.append(part)
    return FilledPrompt(
        instance_id=instance.instance_id,
        template_id=template.template_id,
        text=" ".join(parts),
        sentence_text=sentence.text,
    )


def truncate_for_budget(
    filled: FilledPrompt,
    token_counter: Callable[[str], int],
    max_len: int,
    instance: RelationInstance | None = None,
) -> FilledPrompt:
    """Shorten the sentence portion of a prompt to fit a token budget.

    The sentence head is trimmed first (legal formulae front-load boilerplate
    like "Y que después de esto"), then the tail; characters covering the
    instance's entity mentions are never removed.  When even the minimal
    entity-covering window does not fit, the prompt is flagged ``dropped``.
    """
    if token_counter(filled.text) <= max_len:
        return filled
    scaffold = filled.scaffold()
    if token_counter(scaffold) > max_len:
        raise PromptBudgetError(
            f"scaffold of template {filled.template_id} alone exceeds the "
            f"budget of {max_len} tokens"
        )
    sentence = filled.sentence_text

    keep_from = len(sentence)
    keep_to = 0
    if instance is not None:
        mentions = [instance.e1] + ([instance.e2] if instance.e2 is not None else [])
        keep_from = min(m.start for m in mentions)
        keep_to = max(m.end for m in mentions)

    def assemble(start: int, end: int) -> str:
        window = sentence[start:end].strip()
        return f"{window} {scaffold}" if window else scaffold

    def fits(start: int, end: int) -> bool:
        return token_counter(assemble(start, end)) <= max_len

    # Head trim: binary-search the smallest cut (at a word start) that fits.
    starts = [i for i in _word_starts(sentence) if i <= keep_from]
    lo, hi = 0, len(starts) - 1
    best_start: int | None = None
    while lo <= hi:
        mid = (lo + hi) // 2
        if fits(starts[mid], len(sentence)):
            best_start = starts[mid]
            hi = mid - 1
        else:
            lo = mid + 1
    if best_start is not None:
        return replace(
            filled, text=assemble(best_start, len(sentence)), truncated=True
        )

    # Maximal head trim was not enough: also trim the tail.
    head = starts[-1] if starts else 0
    ends = [i for i in _word_ends(sentence) if i >= max(keep_to, head + 1)]
    lo, hi = 0, len(ends) - 1
    best_end: int | None = None
    while lo <= hi:
        mid = (lo + hi) // 2
        if fits(head, ends[mid]):
            best_end = ends[mid]
            lo = mid + 1
        else:
            hi = mid - 1
    if best_end is not None:
        return replace(filled, text=assemble(head, best_end), truncated=True)
    return replace(filled, truncated=True, dropped=True)


def _word_starts(text: str) -> list[int]:
    starts = []
    for i, ch in enumerate(text):
        if not ch.isspace() and (i == 0 or text[i - 1].isspace()):
            starts.append(i)
    return starts or [0]


def _word_ends(text: str) -> list[int]:
    ends = []
    for i, ch in enumerate(text):
        if not ch.isspace() and (i + 1 == len(text) or text[i + 1].isspace()):
            ends.append(i + 1)
    return ends or [len(text)]


# ---------------------------------------------------------------------------
# Template definition files and prompt records
# ---------------------------------------------------------------------------

def template_to_record(t: PromptTemplate) -> dict[str, Any]:
    return {
        "template_id": t.template_id,
        "segments": [
            {"lit": s.lit} if s.lit is not None else {"slot": s.slot} for s in t.segments
        ],
        "gender_mode": t.gender_mode,
        "arity": t.arity,
    }


def template_from_record(rec: dict[str, Any]) -> PromptTemplate:
    segments = []
    for seg in rec["segments"]:
        if "lit" in seg and seg["lit"] is not None:
            segments.append(lit(seg["lit"]))
        else:
            segments.append(slot(seg["slot"]))
    return PromptTemplate(
        template_id=rec["template_id"],
        segments=tuple(segments),
        gender_mode=rec.get("gender_mode", NEUTRAL),
        arity=rec.get("arity", PAIR),
    )


def load_templates(
    records: Sequence[dict[str, Any]] | None = None,
) -> dict[str, PromptTemplate]:
    """Built-in templates, optionally extended/overridden by custom records."""
    table = builtin_template_map()
    for rec in records or []:
        t = template_from_record(rec)
        table[t.template_id] = t
    return table


def prompt_to_record(p: FilledPrompt) -> dict[str, Any]:
    return {
        "instance_id": p.instance_id,
        "template_id": p.template_id,
        "text": p.text,
        "sentence_text": p.sentence_text,
        "truncated": p.truncated,
        "dropped": p.dropped,
    }


def prompt_from_record(rec: dict[str, Any]) -> FilledPrompt:
    return FilledPrompt(
        instance_id=rec["instance_id"],
        template_id=rec["template_id"],
        text=rec["text"],
        sentence_text=rec.get("sentence_text", ""),
        truncated=bool(rec.get("truncated", False)),
        dropped=bool(rec.get("dropped", False)),
    )
