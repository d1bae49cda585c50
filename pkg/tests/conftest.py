import pytest

from relcloze import synthetic
from relcloze.biasing import ModelRegistry
from relcloze.encoders import MockEncoder, TinyMlmEncoder, WhitespaceVocab
from relcloze.pipeline import RunManifest, execute_stage


def vocab_from_run(run_dir) -> WhitespaceVocab:
    return WhitespaceVocab.from_texts(synthetic.run_vocab_texts(run_dir))


def base_config(root, fixture, *, labels_path=None) -> dict:
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
        "evaluation": {"positive_label": synthetic.LABEL_A},
        "serve": {"label_set": [synthetic.LABEL_A, synthetic.LABEL_B]},
    }
    if labels_path is not None:
        config["evaluation"]["labels"] = str(labels_path)
    return config


def run_full_pipeline(root, *, run_id="run", seed=0, corpus_kwargs=None):
    """Fixture corpus through all eight stages with tiny base/biased models.

    Returns (manifest, config, fixture).
    """
    fixture = synthetic.build_fixture_corpus(root / "corpus", seed=seed, **(corpus_kwargs or {}))
    labels_path = root / "corpus" / "labels.jsonl"
    config = base_config(root, fixture, labels_path=labels_path)
    run_dir = root / "runs" / run_id
    manifest = RunManifest.load_or_create(run_dir, run_id)
    execute_stage("compose", manifest, config)

    labels = synthetic.derive_instance_labels(run_dir / "instances.jsonl", fixture.sentence_labels)
    synthetic.write_labels_file(labels_path, labels)

    registry = ModelRegistry(root / "registry")
    if "tiny-base" not in registry:
        vocab = vocab_from_run(run_dir)
        registry.register(
            TinyMlmEncoder("tiny-base", vocab, hidden_size=32, num_layers=2, seed=1)
        )
    for stage in ("stats", "bias", "prompt", "embed", "cluster", "eval", "report"):
        execute_stage(stage, manifest, config)
    return manifest, config, fixture


def run_mock_pipeline(root, *, run_id="run", n_instances=200, seed=0, noise_sigma=0.1):
    """Two-label mock pipeline: a label-keyed encoder and a label-blind
    control, embedded over identical prompts.

    Returns (manifest, config, labels).
    """
    fixture = synthetic.build_fixture_corpus(
        root / "corpus",
        n_pair_sentences=n_instances,
        n_anaphoric=0,
        n_triple=0,
        n_empty=0,
        oversized_entity_counts=(),
        seed=seed,
    )
    labels_path = root / "corpus" / "labels.jsonl"
    config = base_config(root, fixture, labels_path=labels_path)
    config["prompting"]["models"] = ["mock-sep", "mock-ctrl"]
    run_dir = root / "runs" / run_id
    manifest = RunManifest.load_or_create(run_dir, run_id)
    execute_stage("compose", manifest, config)

    labels = synthetic.derive_instance_labels(run_dir / "instances.jsonl", fixture.sentence_labels)
    synthetic.write_labels_file(labels_path, labels)

    registry = ModelRegistry(root / "registry")
    if "mock-sep" not in registry:
        registry.register(
            MockEncoder("mock-sep", instance_labels=labels, noise_sigma=noise_sigma, seed=5)
        )
        registry.register(MockEncoder("mock-ctrl", seed=6))
    for stage in ("prompt", "embed", "cluster", "eval"):
        execute_stage(stage, manifest, config)
    return manifest, config, labels


@pytest.fixture(scope="session")
def full_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("full_run")
    return run_full_pipeline(root)
