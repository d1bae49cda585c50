"""The whole pipeline, stage by stage, on a generated fixture corpus.

Writes corpus inputs and a config into ./demo_run/, registers a tiny base
encoder, then drives compose -> stats -> bias -> prompt -> embed ->
cluster -> eval -> report exactly as the CLI would.  Re-running the script
is a no-op for every up-to-date stage.

Afterwards, inspect the expert-review service with:

    relcloze --config demo_run/config.yaml --run-id demo serve
"""

from pathlib import Path

import yaml

from relcloze import ModelRegistry, RunManifest, TinyMlmEncoder, WhitespaceVocab, execute_stage
from relcloze import jsonl, synthetic
from relcloze.templates import builtin_templates

root = Path("demo_run")
fixture = synthetic.build_fixture_corpus(root / "corpus", seed=0)

config = {
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
        "learning_rate": 5.0e-5,
        "epochs": 5,
        "masking_probability": 0.15,
        "seed": 7,
        "batch_size": 8,
        "output_model": "tiny-biased",
    },
    "prompting": {
        "templates": ["P1", "P_anaphoric"],
        "models": ["tiny-base", "tiny-biased"],
        "top_k": 10,
    },
    "clustering": {"k": 2, "seed": 11},
    "evaluation": {
        "positive_label": synthetic.LABEL_A,
        "labels": str(root / "corpus" / "labels.jsonl"),
    },
    "serve": {"label_set": [synthetic.LABEL_A, synthetic.LABEL_B], "port": 8732},
}
(root / "config.yaml").write_text(
    yaml.safe_dump(config, allow_unicode=True, sort_keys=True), encoding="utf-8"
)

manifest = RunManifest.load_or_create(root / "runs" / "demo", "demo")
execute_stage("compose", manifest, config)
print("composed:", manifest.run_dir)

# Gold labels key on generated instance ids, so they are derived after
# composition (in the real workflow historians assign them via `serve`).
labels = synthetic.derive_instance_labels(
    manifest.run_dir / "instances.jsonl", fixture.sentence_labels
)
synthetic.write_labels_file(root / "corpus" / "labels.jsonl", labels)
print(f"gold labels written for {len(labels)} instances")

registry = ModelRegistry(root / "registry")
if "tiny-base" not in registry:
    texts = [rec["text"] for rec in jsonl.read_records(manifest.run_dir / "chunks.jsonl")]
    for rec in jsonl.read_records(manifest.run_dir / "sentences.jsonl"):
        texts.append(rec["text"])
        texts.extend(e["surface"] for e in rec["entities"])
    for template in builtin_templates():
        texts.extend(seg.lit for seg in template.segments if seg.lit is not None)
    registry.register(
        TinyMlmEncoder("tiny-base", WhitespaceVocab.from_texts(texts), hidden_size=32, seed=1)
    )
    print("registered tiny-base")

for stage in ("stats", "bias", "prompt", "embed", "cluster", "eval", "report"):
    execute_stage(stage, manifest, config)
    print(f"{stage}: done")

print()
print((manifest.run_dir / "report.txt").read_text(encoding="utf-8"))
