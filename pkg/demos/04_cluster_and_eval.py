"""Clustering mask embeddings and scoring against gold labels.

Uses the label-keyed mock encoder to produce two separable embedding
clouds, fits cosine K-means (K=2), aligns cluster ids to gold labels, and
prints the binomial metrics plus a baseline comparison with a label-blind
control encoder.
"""

import numpy as np

from relcloze import (
    ClusteringConfig,
    MockEncoder,
    build_report,
    compare_runs,
    kmeans_fit,
)

labels = {f"inst{i:03d}": ("viaje" if i % 2 == 0 else "carta") for i in range(60)}

biased = MockEncoder("mock-biased", instance_labels=labels, noise_sigma=0.1, seed=4)
baseline = MockEncoder("mock-baseline", seed=5)


def embed_all(encoder):
    embeddings = []
    for instance_id in sorted(labels):
        prompt = encoder.tokenize(
            f"frase {instance_id} [MASK] [SEP]", instance_id=instance_id, template_id="P1"
        )
        embeddings.append(encoder.mask_hidden_state(prompt))
    return embeddings


config = ClusteringConfig(k=2, seed=9)
reports = []
for encoder in (baseline, biased):
    result = kmeans_fit(embed_all(encoder), config)
    report = build_report(
        run_id="demo",
        model_id=encoder.model_id,
        template_set=["P1"],
        assignments=result.assignments,
        gold=labels,
        k=2,
        positive_label="viaje",
    )
    reports.append(report)
    m = report.metrics
    print(
        f"{encoder.model_id:<14} inertia={result.inertia:8.4f}  "
        f"accuracy={m.accuracy:.4f} precision={m.precision:.4f} "
        f"recall={m.recall:.4f} f1={m.f1:.4f}"
    )
    print(f"{'':14} cluster -> label mapping: {report.mapping}")

comparison = compare_runs(reports[0], reports[1])
print("\nBiased minus baseline:")
for name, delta in comparison.deltas.items():
    print(f"  {name:>9}: {delta:+.4f}")
print(
    f"  agreement: both={comparison.both_correct} only_baseline={comparison.only_a} "
    f"only_biased={comparison.only_b} neither={comparison.neither}"
)
