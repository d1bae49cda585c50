"""Corpus composition walkthrough.

Normalizes archaic spellings, segments on historical punctuation, joins
expert entity annotations, and prints the corpus statistics that guide
which sentences enter relation extraction.
"""

from relcloze import (
    NormalizationRule,
    SegmentationRules,
    attach_entities,
    entity_histogram,
    normalize_document,
    segment_sentences,
    word_stats,
)

RAW = (
    "Y que después de esto el reo dixo que estaua presente quando el dicho "
    "Padilla fue a Pedrosa. Pasó ante mí; Sebastián de Landeta, Notario."
)

RULES = [
    NormalizationRule("dixo", "dijo"),
    NormalizationRule("estaua", "estaba"),
    NormalizationRule("quando", "cuando"),
]

doc = normalize_document(RAW, RULES, doc_id="trial", title="Proceso demo")
print("Raw:       ", doc.raw_text)
print("Normalized:", doc.normalized_text)
print("Log:")
for (start, end), replacement in doc.normalization_log:
    print(f"  ({start:3d},{end:3d})  {doc.raw_text[start:end]!r} -> {replacement!r}")

# Default rules: '.' ends a sentence and stays; ';' splits but is dropped
# (historical semicolons marked a pause for reading aloud).
sentences = segment_sentences(doc, SegmentationRules())
print("\nSentences:")
for s in sentences:
    print(f"  {s.sentence_id}: {s.text!r}  range={s.char_range}")

# Expert annotations reference the normalized text, document-level offsets.
norm = doc.normalized_text
annotations = [
    ((norm.index("Padilla"), norm.index("Padilla") + len("Padilla")), "e_padilla"),
    ((norm.index("Pedrosa"), norm.index("Pedrosa") + len("Pedrosa")), "e_pedrosa"),
    (
        (
            norm.index("Sebastián de Landeta"),
            norm.index("Sebastián de Landeta") + len("Sebastián de Landeta"),
        ),
        "e_landeta",
    ),
]
sentences = attach_entities(sentences, annotations)
print("\nEntities:")
for s in sentences:
    for e in s.entities:
        print(f"  {s.sentence_id}: [{e.start}:{e.end}] {e.surface!r}")

hist = entity_histogram(sentences)
print("\nEntities per sentence:", dict(sorted(hist.counts.items())))
print("75th percentile of entity counts:", hist.percentile(75))

stats = word_stats([doc], sentences)
print("\nWords per sentence:")
for row in stats.rows:
    print(
        f"  {row.title}: mean={row.mean:.2f} std={row.std:.2f} "
        f"median={row.median:.0f} words={row.total_words} sentences={row.total_sentences}"
    )
