"""Domain biasing on a synthetic expert-book corpus.

Builds token-budgeted chunks, corrupts them with the 15% / 80-10-10 masked-LM
recipe, trains the tiny numpy encoder for 5 epochs at lr=5e-5, and shows the
registry lineage from the biased model back to its base.
"""

from pathlib import Path
from tempfile import mkdtemp

import numpy as np

from relcloze import (
    BiasingConfig,
    ModelRegistry,
    TinyMlmEncoder,
    WhitespaceVocab,
    build_biasing_chunks,
    make_masked_examples,
    normalize_document,
    run_biasing,
)

rng = np.random.default_rng(0)
openers = ["El Santo Oficio", "La doctrina", "El catecismo", "El tribunal"]
claims = [
    "que la fe era el fundamento de la ley",
    "que la confesión había de hacerse entera",
    "que la palabra estaba escrita en romance",
    "que el juramento valía ante el juez",
]
sentences = [
    f"{rng.choice(openers)} declaró {rng.choice(claims)}." for _ in range(50)
]
book = normalize_document(
    " ".join(sentences), [], doc_id="doctrina", title="Doctrina", source_kind="expert_book"
)

chunks, warnings = build_biasing_chunks([book], 48, lambda t: len(t.split()) + 1)
print(f"{len(chunks)} chunks, {len(warnings)} hard-split warnings")

vocab = WhitespaceVocab.from_texts(c.text for c in chunks)
registry = ModelRegistry(Path(mkdtemp()) / "registry")
base = TinyMlmEncoder("tiny-base", vocab, hidden_size=32, num_layers=2, seed=1)
registry.register(base)

config = BiasingConfig(
    base_model_id="tiny-base",
    learning_rate=5e-5,
    epochs=5,
    masking_probability=0.15,
    seed=3,
    batch_size=8,
    output_model_id="tiny-biased",
)

examples, _ = make_masked_examples(registry.load_encoder("tiny-base"), chunks, config)
corrupted = sum(1 for ex in examples for lab in ex.labels if lab >= 0)
total = sum(len(ex.labels) for ex in examples)
print(f"masked {corrupted}/{total} tokens ({corrupted / total:.1%}, target 15% of maskable)")

report = run_biasing(registry, config, chunks)
print("\nPer-epoch loss trace:")
for epoch, loss in enumerate(report.losses, start=1):
    print(f"  epoch {epoch}: {loss:.6f}")
print(f"final loss {report.final_loss:.6f} (started at {report.losses[0]:.6f})")
print("lineage:", " -> ".join(registry.lineage(report.output_model_id)))
