"""Relation instances and the six cloze scaffolds.

Shows the pairing combinatorics (one pair for 2 entities, three pairs for
3, an anaphoric instance for an isolated entity) and every built-in
template filled over the same sentence.
"""

from relcloze import builtin_templates, fill_template, generate_instances
from relcloze.corpus import AnnotatedSentence, EntityMention

# A three-entity sentence: pairing triples the training signal.
text = "Pedro de Cazalla llevó a Padilla a casa de Catalina Román."
entities = [
    EntityMention("e1", 0, 16, "Pedro de Cazalla"),
    EntityMention("e2", 25, 32, "Padilla"),
    EntityMention("e3", 43, 57, "Catalina Román"),
]
sentence = AnnotatedSentence("demo:s0", "demo", text, (0, len(text)), entities)

instances = generate_instances(sentence)
print(f"{len(entities)} entities -> {len(instances)} instances:")
for instance in instances:
    e2 = instance.e2.surface if instance.e2 else "(la frase anterior)"
    print(f"  {instance.instance_id}: {instance.e1.surface!r} / {e2!r}")

templates = {t.template_id: t for t in builtin_templates()}
pair = instances[0]
print("\nPair templates over the first instance:")
for tid in ("P0", "P1", "P2", "P3", "P4"):
    filled = fill_template(templates[tid], pair, sentence)
    print(f"  {tid} ({templates[tid].gender_mode}):")
    print(f"    {filled.text}")

# An isolated entity relates to the document itself through the anaphoric
# scaffold's phantom entity.
notary = "Pasó ante mí; Sebastián de Landeta, Notario."
notary_sentence = AnnotatedSentence(
    "demo:s1",
    "demo",
    notary,
    (0, len(notary)),
    [EntityMention("e4", 14, 34, "Sebastián de Landeta")],
)
(anaphoric,) = generate_instances(notary_sentence)
filled = fill_template(templates["P_anaphoric"], anaphoric, notary_sentence)
print("\nAnaphoric template over an isolated entity:")
print(f"  {filled.text}")
