import numpy as np
import pytest

from relcloze.encoders import (
    MASK_TOKEN,
    MaskedExample,
    MockEncoder,
    TinyMlmEncoder,
    TrainConfig,
    WhitespaceVocab,
)
from relcloze.errors import BackendError, PromptShapeError


@pytest.fixture
def mock():
    return MockEncoder("mock", hidden_size=16, seed=3)


class TestTokenize:
    def test_exactly_one_mask(self, mock):
        prompt = mock.tokenize("hola [MASK] mundo [SEP]", instance_id="i", template_id="P0")
        assert prompt.token_ids[prompt.mask_index] == mock._token_id(MASK_TOKEN)
        assert sum(1 for t in prompt.token_ids if t == mock._token_id(MASK_TOKEN)) == 1

    def test_two_masks_rejected(self, mock):
        with pytest.raises(PromptShapeError):
            mock.tokenize("[MASK] y [MASK] [SEP]")

    def test_zero_masks_rejected(self, mock):
        with pytest.raises(PromptShapeError):
            mock.tokenize("sin mascara [SEP]")

    def test_glued_mask_rejected(self, mock):
        with pytest.raises(PromptShapeError):
            mock.tokenize("palabra [MASK]. [SEP]")

    def test_roundtrip_modulo_whitespace(self, mock):
        rng = np.random.default_rng(1)
        words = ["el", "reo", "dijo", "que", "estaba", "presente", "ante", "mí"]
        for _ in range(100):
            n = int(rng.integers(1, 12))
            text = " ".join(str(rng.choice(words)) for _ in range(n))
            prompt_text = f"{text} [MASK] [SEP]"
            prompt = mock.tokenize(prompt_text)
            assert mock.detokenize(prompt.token_ids) == prompt_text

    def test_over_length_prompt_rejected(self):
        enc = MockEncoder("m", max_sequence_length=4)
        with pytest.raises(BackendError):
            enc.tokenize("a b c [MASK] [SEP]")


class TestTopK:
    def test_fixed_logits_exact_ranking(self, mock):
        prompt = mock.tokenize("uno dos tres [MASK] [SEP]")
        vocab = list(mock._vocab.id_to_token)
        logits = np.full(len(vocab), -10.0)
        logits[vocab.index("dos")] = 3.0
        logits[vocab.index("uno")] = 2.0
        logits[vocab.index("tres")] = 1.0
        enc = MockEncoder("mock", seed=3, logits_fn=lambda p: logits, vocab=mock._vocab)
        top = enc.predict_masked_topk(prompt, 3)
        assert top.tokens() == ["dos", "uno", "tres"]
        z = np.exp(logits - logits.max())
        expected = z / z.sum()
        assert top.items[0][1] == pytest.approx(expected[vocab.index("dos")], rel=1e-12)

    def test_probabilities_non_increasing_and_bounded(self, mock):
        prompt = mock.tokenize("alpha beta gamma [MASK] [SEP]")
        top = mock.predict_masked_topk(prompt, 5)
        probs = [p for _, p in top.items]
        assert all(0.0 <= p <= 1.0 for p in probs)
        assert all(a >= b for a, b in zip(probs, probs[1:]))
        assert sum(probs) <= 1.0 + 1e-12

    def test_k_zero_gives_empty_list(self, mock):
        prompt = mock.tokenize("x [MASK] [SEP]")
        assert mock.predict_masked_topk(prompt, 0).items == ()

    def test_k_above_vocabulary_rejected(self, mock):
        prompt = mock.tokenize("x [MASK] [SEP]")
        with pytest.raises(ValueError):
            mock.predict_masked_topk(prompt, mock.vocabulary_size + 1)

    def test_deterministic(self, mock):
        prompt = mock.tokenize("frase de prueba [MASK] [SEP]", instance_id="i1")
        a = mock.predict_masked_topk(prompt, 4)
        b = mock.predict_masked_topk(prompt, 4)
        assert a == b


class TestMaskHiddenState:
    def test_repeat_calls_bitwise_identical(self, mock):
        prompt = mock.tokenize("la causa [MASK] [SEP]", instance_id="i7", template_id="P1")
        v1 = mock.mask_hidden_state(prompt).vector
        v2 = mock.mask_hidden_state(prompt).vector
        assert np.array_equal(v1, v2)

    def test_vector_length_is_hidden_size(self, mock):
        for i in range(5):
            prompt = mock.tokenize(f"texto {i} [MASK] [SEP]", instance_id=f"i{i}")
            assert mock.mask_hidden_state(prompt).vector.shape == (mock.hidden_size,)

    def test_label_keyed_orthogonal_vectors_exact(self):
        labels = {"a": "carta", "b": "viaje", "c": "carta"}
        enc = MockEncoder("m", hidden_size=8, instance_labels=labels, noise_sigma=0.0)
        vectors = {}
        for iid in labels:
            prompt = enc.tokenize(f"texto {iid} [MASK] [SEP]", instance_id=iid)
            vectors[iid] = enc.mask_hidden_state(prompt).vector
        expected_carta = np.zeros(8)
        expected_carta[0] = 1.0  # labels sorted: carta -> axis 0, viaje -> axis 1
        expected_viaje = np.zeros(8)
        expected_viaje[1] = 1.0
        assert np.array_equal(vectors["a"], expected_carta)
        assert np.array_equal(vectors["c"], expected_carta)
        assert np.array_equal(vectors["b"], expected_viaje)
        assert float(vectors["a"] @ vectors["b"]) == 0.0

    def test_model_mismatch_rejected(self, mock):
        other = MockEncoder("other", seed=1)
        prompt = other.tokenize("x [MASK] [SEP]")
        with pytest.raises(BackendError):
            mock.mask_hidden_state(prompt)

    def test_mock_is_not_trainable(self, mock):
        with pytest.raises(BackendError):
            mock.train_mlm([], TrainConfig(1e-4, 1))


class TestTinyEncoder:
    def make(self, seed=0):
        texts = [f"el testigo {i} dijo la verdad ante el tribunal" for i in range(30)]
        vocab = WhitespaceVocab.from_texts(texts)
        return TinyMlmEncoder("tiny", vocab, hidden_size=32, num_layers=2, seed=seed), texts

    def test_forward_shapes_and_determinism(self):
        enc, _ = self.make()
        prompt = enc.tokenize("el testigo 3 dijo [MASK] [SEP]", instance_id="i")
        v1 = enc.mask_hidden_state(prompt).vector
        v2 = enc.mask_hidden_state(prompt).vector
        assert v1.shape == (32,)
        assert np.array_equal(v1, v2)

    def test_zero_epochs_leaves_weights_unchanged(self):
        enc, _ = self.make()
        before = {k: v.copy() for k, v in enc.params.items()}
        trace = enc.train_mlm(
            [MaskedExample("c", (1, 5, 6), (-1, -1, 6))], TrainConfig(1e-3, 0)
        )
        assert trace == []
        assert all(np.array_equal(before[k], enc.params[k]) for k in before)

    def test_training_reduces_loss(self):
        enc, texts = self.make()
        examples = []
        mask_id = enc._token_id("[MASK]")
        for i, text in enumerate(texts):
            ids = enc.encode_text(text)
            target = 3 + (i % 3)
            labels = [-1] * len(ids)
            labels[target] = ids[target]
            corrupted = list(ids)
            corrupted[target] = mask_id
            examples.append(MaskedExample(f"c{i}", tuple(corrupted), tuple(labels)))
        losses = enc.train_mlm(examples, TrainConfig(1e-2, 8, batch_size=8, seed=0))
        assert len(losses) == 8
        assert losses[-1] < losses[0]

    def test_gradients_match_finite_differences(self):
        # independent oracle for the hand-rolled backprop
        enc, _ = self.make(seed=4)
        ids = np.asarray(enc.encode_text("el testigo 1 dijo la verdad"))
        labels = np.full(len(ids), -1)
        labels[2] = ids[2]
        labels[4] = ids[4]
        grads = {k: np.zeros_like(v) for k, v in enc.params.items()}
        loss_sum, count = enc._loss_and_grads(ids, labels, grads)

        def loss_at() -> float:
            g = {k: np.zeros_like(v) for k, v in enc.params.items()}
            s, _ = enc._loss_and_grads(ids, labels, g)
            return s

        rng = np.random.default_rng(0)
        eps = 1e-6
        for key in ("emb", "w0", "u1", "b0", "out_b", "pos"):
            flat_index = int(rng.integers(enc.params[key].size))
            index = np.unravel_index(flat_index, enc.params[key].shape)
            original = enc.params[key][index]
            enc.params[key][index] = original + eps
            up = loss_at()
            enc.params[key][index] = original - eps
            down = loss_at()
            enc.params[key][index] = original
            numeric = (up - down) / (2 * eps)
            assert grads[key][index] == pytest.approx(numeric, rel=1e-4, abs=1e-7)

    def test_save_load_roundtrip(self, tmp_path):
        enc, _ = self.make()
        enc.save(tmp_path)
        loaded = TinyMlmEncoder.load(tmp_path, "tiny")
        prompt = enc.tokenize("el testigo 2 dijo [MASK] [SEP]", instance_id="i")
        prompt2 = loaded.tokenize("el testigo 2 dijo [MASK] [SEP]", instance_id="i")
        assert np.array_equal(
            enc.mask_hidden_state(prompt).vector, loaded.mask_hidden_state(prompt2).vector
        )

class TestEmbeddingRecords:
    def test_decimal_roundtrip_is_exact(self):
        from relcloze.encoders import MaskEmbedding, embedding_from_record, embedding_to_record

        rng = np.random.default_rng(0)
        original = MaskEmbedding("i", "m", "P1", rng.standard_normal(32))
        restored = embedding_from_record(embedding_to_record(original, encoding="decimal"))
        assert np.array_equal(restored.vector, original.vector)

    def test_binary_roundtrip_is_exact(self):
        from relcloze.encoders import MaskEmbedding, embedding_from_record, embedding_to_record

        rng = np.random.default_rng(1)
        original = MaskEmbedding("i", "m", "P1", rng.standard_normal(32))
        record = embedding_to_record(original, encoding="binary")
        assert "vector_b64" in record and "vector" not in record
        restored = embedding_from_record(record)
        assert np.array_equal(restored.vector, original.vector)

    def test_unknown_encoding_rejected(self):
        from relcloze.encoders import MaskEmbedding, embedding_to_record

        with pytest.raises(ValueError):
            embedding_to_record(MaskEmbedding("i", "m", "P1", np.ones(3)), encoding="hex")


class TestTinyEncoderTraining:
    def make(self, seed=0):
        texts = [f"el testigo {i} dijo la verdad ante el tribunal" for i in range(30)]
        vocab = WhitespaceVocab.from_texts(texts)
        return TinyMlmEncoder("tiny", vocab, hidden_size=32, num_layers=2, seed=seed), texts

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_loss_aborts_with_batch_id(self):
        enc, _ = self.make()
        enc.params["emb"][:] = np.inf
        example = MaskedExample("bad-chunk", tuple(enc.encode_text("el testigo")), (-1, 5, 6))
        with pytest.raises(BackendError) as err:
            enc.train_mlm([example], TrainConfig(1e-3, 1))
        assert "bad-chunk" in str(err.value)
