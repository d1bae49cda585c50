import numpy as np
import pytest

from relcloze import jsonl
from relcloze.biasing import BiasingConfig, BiasingReport, ModelRegistry, run_biasing
from relcloze.corpus import BiasingChunk
from relcloze.encoders import MockEncoder, TinyMlmEncoder, WhitespaceVocab
from relcloze.errors import ConfigurationError, RegistryError


def synthetic_chunks(n=50):
    texts = [
        f"el testigo {i} dijo ante el tribunal que la causa era justa y santa"
        for i in range(n)
    ]
    return [BiasingChunk(f"c{i}", "d", (0, len(t)), t) for i, t in enumerate(texts)]


def tiny_encoder(model_id="tiny-base", seed=1):
    vocab = WhitespaceVocab.from_texts(c.text for c in synthetic_chunks())
    return TinyMlmEncoder(model_id, vocab, hidden_size=32, num_layers=2, seed=seed)


class TestRegistry:
    def test_register_then_lookup_roundtrip(self, tmp_path):
        registry = ModelRegistry(tmp_path)
        registry.register(MockEncoder("m1", seed=2))
        meta = registry.lookup("m1")
        assert meta["model_id"] == "m1"
        assert meta["kind"] == "mock"
        assert meta["parent_model"] is None

    def test_lookup_unknown_model(self, tmp_path):
        registry = ModelRegistry(tmp_path)
        with pytest.raises(RegistryError):
            registry.lookup("nope")

    def test_duplicate_registration_rejected(self, tmp_path):
        registry = ModelRegistry(tmp_path)
        registry.register(MockEncoder("m1"))
        with pytest.raises(RegistryError):
            registry.register(MockEncoder("m1"))

    def test_dangling_parent_rejected(self, tmp_path):
        registry = ModelRegistry(tmp_path)
        with pytest.raises(RegistryError):
            registry.register(MockEncoder("child"), parent_model="ghost")

    def test_three_step_lineage_resolves(self, tmp_path):
        registry = ModelRegistry(tmp_path)
        registry.register(MockEncoder("base"))
        registry.register(MockEncoder("gen1"), parent_model="base")
        registry.register(MockEncoder("gen2"), parent_model="gen1")
        assert registry.lineage("gen2") == ["gen2", "gen1", "base"]

    def test_load_encoder_restores_mock_config(self, tmp_path):
        registry = ModelRegistry(tmp_path)
        labels = {"i1": "carta"}
        registry.register(MockEncoder("m", instance_labels=labels, noise_sigma=0.25, seed=9))
        loaded = registry.load_encoder("m")
        assert loaded.instance_labels == labels
        assert loaded.noise_sigma == 0.25 and loaded.seed == 9

    def test_load_encoder_restores_tiny_weights(self, tmp_path):
        registry = ModelRegistry(tmp_path)
        enc = tiny_encoder()
        registry.register(enc)
        loaded = registry.load_encoder("tiny-base")
        assert all(np.array_equal(enc.params[k], loaded.params[k]) for k in enc.params)


class TestRunBiasing:
    def test_smoke_run_reduces_loss_and_registers(self, tmp_path):
        registry = ModelRegistry(tmp_path)
        registry.register(tiny_encoder())
        config = BiasingConfig(
            base_model_id="tiny-base",
            learning_rate=5e-5,
            epochs=5,
            seed=3,
            batch_size=8,
            output_model_id="tiny-biased",
        )
        report = run_biasing(registry, config, synthetic_chunks())
        assert len(report.losses) == 5
        assert report.losses[-1] < report.losses[0]
        assert report.final_loss == report.losses[-1]
        # lineage and report persistence
        assert registry.lineage("tiny-biased") == ["tiny-biased", "tiny-base"]
        stored = jsonl.read_json(registry.report_path("tiny-biased"))
        roundtrip = BiasingReport.from_record(stored)
        assert roundtrip.config.learning_rate == 5e-5
        assert roundtrip.config.epochs == 5
        assert roundtrip.losses == report.losses

    def test_missing_base_model(self, tmp_path):
        registry = ModelRegistry(tmp_path)
        config = BiasingConfig(base_model_id="ghost")
        with pytest.raises(RegistryError):
            run_biasing(registry, config, synthetic_chunks())

    def test_zero_epochs_rejected_by_config(self):
        with pytest.raises(ConfigurationError):
            BiasingConfig(base_model_id="x", epochs=0)

    def test_biased_metadata_echoes_config(self, tmp_path):
        registry = ModelRegistry(tmp_path)
        registry.register(tiny_encoder())
        config = BiasingConfig(base_model_id="tiny-base", epochs=2, seed=1, batch_size=16)
        report = run_biasing(registry, config, synthetic_chunks())
        meta = registry.lookup(report.output_model_id)
        assert meta["parent_model"] == "tiny-base"
        assert meta["biasing_config"]["learning_rate"] == 5e-5
        assert meta["final_loss"] == report.final_loss

    def test_default_output_id(self, tmp_path):
        registry = ModelRegistry(tmp_path)
        registry.register(tiny_encoder())
        config = BiasingConfig(base_model_id="tiny-base", epochs=1)
        report = run_biasing(registry, config, synthetic_chunks())
        assert report.output_model_id == "tiny-base-biased"

    def test_deterministic_given_seed(self, tmp_path):
        reports = []
        for sub in ("a", "b"):
            registry = ModelRegistry(tmp_path / sub)
            registry.register(tiny_encoder())
            config = BiasingConfig(base_model_id="tiny-base", epochs=2, seed=5, batch_size=8)
            reports.append(run_biasing(registry, config, synthetic_chunks()))
        assert reports[0].losses == reports[1].losses


class TestBiasingReport:
    def test_loss_trace_length_must_match_epochs(self):
        config = BiasingConfig(base_model_id="x", epochs=3)
        with pytest.raises(ConfigurationError):
            BiasingReport(config=config, losses=[1.0], final_loss=1.0, output_model_id="y")

    def test_final_loss_must_equal_last_entry(self):
        config = BiasingConfig(base_model_id="x", epochs=2)
        with pytest.raises(ConfigurationError):
            BiasingReport(config=config, losses=[1.0, 0.5], final_loss=0.9, output_model_id="y")
