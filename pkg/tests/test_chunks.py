import numpy as np
import pytest

from relcloze.corpus import EXPERT_BOOK, build_biasing_chunks, normalize_document
from relcloze.errors import ConfigurationError


def whitespace_tokens(text: str) -> int:
    return len(text.split())


def book(doc_id: str, text: str):
    return normalize_document(text, [], doc_id=doc_id, source_kind=EXPERT_BOOK)


def test_one_short_document_yields_one_chunk():
    chunks, warnings = build_biasing_chunks([book("b", "Una frase corta.")], 64, whitespace_tokens)
    assert len(chunks) == 1 and not warnings
    assert chunks[0].text == "Una frase corta."


def test_chunks_cover_all_normalized_text():
    rng = np.random.default_rng(9)
    docs = []
    for d in range(4):
        sentences = [
            " ".join(f"w{rng.integers(50)}" for _ in range(int(rng.integers(4, 20)))) + "."
            for _ in range(int(rng.integers(5, 25)))
        ]
        docs.append(book(f"b{d}", " ".join(sentences)))
    chunks, _ = build_biasing_chunks(docs, 32, whitespace_tokens)
    for doc in docs:
        rebuilt = "".join(c.text for c in chunks if c.doc_id == doc.doc_id)
        assert rebuilt == doc.normalized_text


def test_every_chunk_respects_token_budget():
    rng = np.random.default_rng(4)
    sentences = [
        " ".join(f"t{rng.integers(99)}" for _ in range(int(rng.integers(3, 40)))) + "."
        for _ in range(40)
    ]
    doc = book("b", " ".join(sentences))
    for budget in (8, 16, 512):
        chunks, _ = build_biasing_chunks([doc], budget, whitespace_tokens)
        assert all(whitespace_tokens(c.text) <= budget for c in chunks)


def test_oversized_sentence_hard_split_with_warning():
    long_sentence = " ".join(f"palabra{i}" for i in range(100)) + "."
    doc = book("b", long_sentence)
    chunks, warnings = build_biasing_chunks([doc], 16, whitespace_tokens)
    assert len(warnings) == 1
    assert "hard-split" in warnings[0].message
    assert all(whitespace_tokens(c.text) <= 16 for c in chunks)
    assert "".join(c.text for c in chunks) == doc.normalized_text


def test_chunk_boundaries_fall_on_sentence_starts_when_possible():
    doc = book("b", "Primera frase aqui. Segunda frase alli. Tercera frase final.")
    chunks, warnings = build_biasing_chunks([doc], 4, whitespace_tokens)
    assert not warnings
    assert [c.text for c in chunks] == [
        "Primera frase aqui. ",
        "Segunda frase alli. ",
        "Tercera frase final.",
    ]


def test_invalid_budget_rejected():
    with pytest.raises(ConfigurationError):
        build_biasing_chunks([book("b", "x.")], 0, whitespace_tokens)


def test_char_ranges_slice_normalized_text():
    doc = book("b", "Frase uno. Frase dos con más palabras. Frase tres.")
    chunks, _ = build_biasing_chunks([doc], 5, whitespace_tokens)
    for c in chunks:
        start, end = c.char_range
        assert doc.normalized_text[start:end] == c.text
