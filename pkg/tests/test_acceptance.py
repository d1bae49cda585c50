"""Acceptance suite: one test per release criterion.

Each test prints a single ``ACCEPTANCE <name>: PASS (<elapsed>)`` line
(visible with ``pytest -s``) and enforces the criterion's stated time
budget and tolerance.
"""

import json
import math
import time
from contextlib import contextmanager
from itertools import permutations
from pathlib import Path

import numpy as np
import pytest

from relcloze import jsonl, synthetic
from relcloze.biasing import BiasingConfig, ModelRegistry, make_masked_examples, run_biasing
from relcloze.clustering import ClusteringConfig, kmeans_fit
from relcloze.corpus import AnnotatedSentence, BiasingChunk, EntityMention, generate_instances
from relcloze.encoders import MockEncoder, TinyMlmEncoder, WhitespaceVocab
from relcloze.evaluation import BinaryCells, align_clusters, compute_metrics
from relcloze.pipeline import load_rulesets
from relcloze.templates import builtin_template_map, fill_template

from conftest import run_full_pipeline, run_mock_pipeline

DATA = Path(__file__).parent / "data"


@contextmanager
def criterion(name: str, budget_seconds: float):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {name}: FAIL ({time.perf_counter() - start:.2f}s)")
        raise
    elapsed = time.perf_counter() - start
    assert elapsed < budget_seconds, f"{name} took {elapsed:.2f}s, budget {budget_seconds}s"
    print(f"ACCEPTANCE {name}: PASS ({elapsed:.2f}s)")


def test_combinatorics(tmp_path):
    """Instance counts per sentence: 0->0, 1->1, 2->1, 3->3; a corpus with
    S3 three-entity sentences yields exactly 3*S3 pair instances."""
    with criterion("combinatorics", 1.0):
        fixture = synthetic.build_fixture_corpus(
            tmp_path,
            n_pair_sentences=10,
            n_anaphoric=5,
            n_triple=7,
            n_empty=3,
            oversized_entity_counts=(),
            seed=2,
        )
        rules, segmentation = load_rulesets(fixture.rulesets_path)
        from relcloze.corpus import attach_entities, normalize_document, segment_sentences

        docs = list(jsonl.read_records(fixture.documents_path))
        annotations = list(jsonl.read_records(fixture.annotations_path))
        target = next(d for d in docs if d["doc_id"] == "trial")
        doc = normalize_document(target["raw_text"], rules, doc_id="trial")
        sentences = attach_entities(
            segment_sentences(doc, segmentation),
            [((a["start"], a["end"]), a["entity_id"]) for a in annotations],
        )
        expected_by_cardinality = {0: 0, 1: 1, 2: 1, 3: 3}
        three_entity_sentences = 0
        pairs_from_triples = 0
        for sentence in sentences:
            n = len(sentence.entities)
            instances = generate_instances(sentence)
            assert len(instances) == expected_by_cardinality[n], (
                f"sentence with {n} entities produced {len(instances)} instances"
            )
            if n == 3:
                three_entity_sentences += 1
                pairs_from_triples += len(instances)
        assert three_entity_sentences == 7
        assert pairs_from_triples == 3 * three_entity_sentences


def test_template_byte_exactness():
    """Filled P0-P4 and P_anaphoric match frozen golden strings."""
    with criterion("template_byte_exactness", 1.0):
        golden = json.loads((DATA / "golden_prompts.json").read_text(encoding="utf-8"))
        table = builtin_template_map()
        checked = 0
        for case_name, case in golden.items():
            if case_name.startswith("_"):
                continue
            text = case["sentence"]
            e1 = EntityMention("e1", case["e1"][0], case["e1"][1], text[case["e1"][0] : case["e1"][1]])
            entities = [e1]
            e2 = None
            if "e2" in case:
                e2 = EntityMention(
                    "e2", case["e2"][0], case["e2"][1], text[case["e2"][0] : case["e2"][1]]
                )
                entities.append(e2)
            sentence = AnnotatedSentence("d:s0", "d", text, (0, len(text)), entities)
            from relcloze.corpus import ANAPHORIC, PAIR, RelationInstance

            if e2 is None:
                instance = RelationInstance("d:s0:a", "d:s0", ANAPHORIC, e1)
            else:
                instance = RelationInstance("d:s0:p", "d:s0", PAIR, e1, e2)
            for template_id, expected in case["expected"].items():
                filled = fill_template(table[template_id], instance, sentence)
                assert filled.text == expected, f"{case_name}/{template_id} diverges"
                checked += 1
        assert checked == 11  # 2 pair cases x 5 templates + 1 anaphoric


def test_metrics_oracle():
    """1,000 random confusion matrices match an independent definition-based
    oracle to 1e-12, zero-denominator conventions included."""
    with criterion("metrics_oracle", 5.0):
        def oracle(tp, fp, fn, tn):
            n = tp + fp + fn + tn
            accuracy = (tp + tn) / n
            precision = tp / (tp + fp) if tp + fp else 0.0
            recall = tp / (tp + fn) if tp + fn else 0.0
            f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
            return accuracy, precision, recall, f1

        rng = np.random.default_rng(1234)
        cases = 0
        while cases < 1000:
            tp, fp, fn, tn = (int(x) for x in rng.integers(0, 25, size=4))
            if tp + fp + fn + tn == 0:
                continue
            cases += 1
            m = compute_metrics(BinaryCells(tp=tp, fp=fp, fn=fn, tn=tn))
            for got, want in zip(
                (m.accuracy, m.precision, m.recall, m.f1), oracle(tp, fp, fn, tn)
            ):
                assert abs(got - want) <= 1e-12
        # explicit zero-denominator cases
        for cells in (
            BinaryCells(0, 0, 5, 5),
            BinaryCells(0, 5, 0, 5),
            BinaryCells(0, 0, 0, 5),
        ):
            m = compute_metrics(cells)
            assert m.f1 == 0.0


def test_alignment_optimality():
    """align_clusters accuracy equals the brute-force permutation maximum
    for 200 random K=2 and K=3 cases (n <= 12)."""
    with criterion("alignment_optimality", 10.0):
        rng = np.random.default_rng(77)
        cases = 0
        while cases < 200:
            k = int(rng.choice([2, 3]))
            n = int(rng.integers(k, 13))
            assignments = {f"i{j}": int(rng.integers(k)) for j in range(n)}
            labels = [chr(ord("A") + x) for x in range(k)]
            gold = {f"i{j}": str(rng.choice(labels)) for j in range(n)}
            if len(set(gold.values())) != k:
                continue
            cases += 1
            mapping = align_clusters(assignments, gold, k)
            achieved = sum(1 for i, c in assignments.items() if mapping[c] == gold[i]) / n
            best = max(
                sum(1 for i, c in assignments.items() if perm[c] == gold[i]) / n
                for perm in permutations(sorted(set(gold.values())))
            )
            assert achieved == best


def test_kmeans_oracle():
    """Fit inertia within 1e-9 of the exhaustive two-partition optimum on 50
    well-separated instances (angle >= 60 deg, sigma <= 0.05, n <= 8);
    identical seeds give bitwise-identical results."""
    with criterion("kmeans_oracle", 30.0):
        from itertools import combinations

        def spherical_inertia(x, membership):
            total = 0.0
            for cluster in np.unique(membership):
                members = x[membership == cluster]
                centroid = members.mean(axis=0)
                centroid = centroid / np.linalg.norm(centroid)
                total += float(np.sum((members - centroid) ** 2))
            return total

        def exhaustive_optimum(x):
            n = len(x)
            best = np.inf
            for size in range(1, n // 2 + 1):
                for group in combinations(range(n), size):
                    membership = np.zeros(n, dtype=int)
                    membership[list(group)] = 1
                    best = min(best, spherical_inertia(x, membership))
            return best

        rng = np.random.default_rng(31)
        for case in range(50):
            dim = int(rng.integers(3, 9))
            n = int(rng.integers(4, 9))
            angle = float(rng.uniform(60.0, 120.0))
            sigma = float(rng.uniform(0.01, 0.05))
            u = rng.standard_normal(dim)
            u /= np.linalg.norm(u)
            w = rng.standard_normal(dim)
            w -= (w @ u) * u
            w /= np.linalg.norm(w)
            v = math.cos(math.radians(angle)) * u + math.sin(math.radians(angle)) * w
            points = []
            for i in range(n):
                center = u if i < n // 2 else v
                p = center + sigma * rng.standard_normal(dim)
                points.append(p / np.linalg.norm(p))
            x = np.asarray(points)
            from relcloze.encoders import MaskEmbedding

            embeddings = [MaskEmbedding(f"i{j:02d}", "m", "P1", row) for j, row in enumerate(x)]
            config = ClusteringConfig(k=2, seed=case)
            result = kmeans_fit(embeddings, config)
            optimum = exhaustive_optimum(x)
            assert abs(result.inertia - optimum) <= 1e-9, (
                f"case {case}: inertia {result.inertia} vs optimum {optimum}"
            )
            replay = kmeans_fit(embeddings, config)
            assert replay.assignments == result.assignments
            assert replay.centroids.tobytes() == result.centroids.tobytes()
            assert replay.inertia == result.inertia


def test_end_to_end_separation(tmp_path):
    """Mock pipeline on 200 two-label instances: label-keyed encoder reaches
    accuracy >= 0.95 after alignment; the label-blind control stays in
    [0.4, 0.62] (the K=2 alignment floor is 0.5)."""
    with criterion("end_to_end_separation", 60.0):
        manifest, config, labels = run_mock_pipeline(
            tmp_path, n_instances=200, seed=3, noise_sigma=0.1
        )
        assert len(labels) == 200
        sep = jsonl.read_json(manifest.run_dir / "eval" / "mock-sep.json")
        ctrl = jsonl.read_json(manifest.run_dir / "eval" / "mock-ctrl.json")
        assert len(sep["records"]) == 200
        assert sep["metrics"]["accuracy"] >= 0.95, sep["metrics"]
        assert 0.4 <= ctrl["metrics"]["accuracy"] <= 0.62, ctrl["metrics"]
        assert ctrl["metrics"]["accuracy"] >= 0.5  # alignment floor for K=2


def test_biasing_smoke(tmp_path):
    """Tiny trainable encoder (2 layers, hidden 32) biased on a 50-sentence
    synthetic corpus with lr=5e-5 for 5 epochs: loss decreases, the report
    is persisted, and registry lineage resolves."""
    with criterion("biasing_smoke", 120.0):
        rng = np.random.default_rng(0)
        texts = [
            " ".join(
                ["el", "testigo", f"n{i}", "dijo", "ante", "el", "tribunal", "que", "la"]
                + [str(rng.choice(["causa", "fe", "doctrina", "palabra"])) for _ in range(3)]
                + ["era", str(rng.choice(["justa", "santa", "cierta"]))]
            )
            for i in range(50)
        ]
        chunks = [BiasingChunk(f"c{i}", "d", (0, len(t)), t) for i, t in enumerate(texts)]
        vocab = WhitespaceVocab.from_texts(texts)
        registry = ModelRegistry(tmp_path / "registry")
        registry.register(
            TinyMlmEncoder("tiny-base", vocab, hidden_size=32, num_layers=2, seed=4)
        )
        config = BiasingConfig(
            base_model_id="tiny-base",
            learning_rate=5e-5,
            epochs=5,
            seed=9,
            batch_size=8,
            output_model_id="tiny-biased",
        )
        report = run_biasing(registry, config, chunks)
        assert len(report.losses) == 5
        assert report.losses[-1] < report.losses[0], report.losses
        stored = jsonl.read_json(registry.report_path("tiny-biased"))
        assert stored["config"]["learning_rate"] == 5e-5
        assert stored["config"]["epochs"] == 5
        assert stored["losses"] == report.losses
        assert registry.lineage("tiny-biased") == ["tiny-biased", "tiny-base"]


def test_masking_policy():
    """On a 10,000-maskable-token corpus at p=0.15 the selected count lies
    within 3 sigma of the binomial expectation; specials never selected."""
    with criterion("masking_policy", 5.0):
        encoder = MockEncoder("mock", seed=0)
        n_tokens = 10_000
        text = " ".join(f"w{i % 64}" for i in range(n_tokens))
        chunk = BiasingChunk("c0", "d", (0, len(text)), text)
        config = BiasingConfig(base_model_id="mock", masking_probability=0.15, seed=21)
        examples, warnings = make_masked_examples(encoder, [chunk], config)
        assert not warnings
        (example,) = examples
        ids = encoder.encode_text(text)
        assert len(example.labels) == len(ids)
        selected = sum(1 for lab in example.labels if lab >= 0)
        p = 0.15
        sigma = math.sqrt(n_tokens * p * (1 - p))
        assert abs(selected - n_tokens * p) <= 3 * sigma, (selected, n_tokens * p)
        specials = encoder.special_token_ids
        for pos, token in enumerate(ids):
            if token in specials:
                assert example.labels[pos] == -1


def test_reproducibility(tmp_path):
    """Running the full fixture manifest twice with fixed seeds yields
    byte-identical instance, clustering, and eval artifacts."""
    with criterion("reproducibility", 120.0):
        manifest_a, _, _ = run_full_pipeline(tmp_path / "first", seed=8)
        manifest_b, _, _ = run_full_pipeline(tmp_path / "second", seed=8)
        artifacts = [
            "instances.jsonl",
            "clustering/tiny-base.json",
            "clustering/tiny-biased.json",
            "eval/tiny-base.json",
            "eval/tiny-biased.json",
        ]
        for rel in artifacts:
            a = (manifest_a.run_dir / rel).read_bytes()
            b = (manifest_b.run_dir / rel).read_bytes()
            assert a == b, f"{rel} not byte-identical across executions"
