import numpy as np
import pytest

from relcloze.corpus import (
    attach_entities,
    normalize_document,
    segment_sentences,
)
from relcloze.errors import AnnotationError


def segmented(text: str):
    return segment_sentences(normalize_document(text, [], doc_id="d"))


def test_offsets_rebased_to_sentence_coordinates():
    text = "Primera parte. Sebastián de Landeta firmó."
    sentences = segmented(text)
    assert sentences[1].char_range == (15, 42)
    attached = attach_entities(sentences, [((15, 35), "e1")])
    entity = attached[1].entities[0]
    assert (entity.start, entity.end) == (0, 20)
    assert entity.surface == "Sebastián de Landeta"


def test_no_annotations_leaves_sentences_unchanged():
    sentences = segmented("Una frase. Otra frase.")
    attached = attach_entities(sentences, [])
    assert [s.text for s in attached] == [s.text for s in sentences]
    assert all(not s.entities for s in attached)


def test_boundary_spanning_annotation_reports_both_sentences():
    sentences = segmented("Primera frase aqui. Segunda frase alli.")
    with pytest.raises(AnnotationError) as err:
        attach_entities(sentences, [((14, 28), "e1")])
    assert "d:s0" in str(err.value) and "d:s1" in str(err.value)


def test_annotation_outside_every_sentence_is_rejected():
    sentences = segmented("Frase corta.")
    with pytest.raises(AnnotationError):
        attach_entities(sentences, [((100, 110), "e1")])


def test_randomized_spans_surface_equals_slice():
    rng = np.random.default_rng(42)
    words = ["proceso", "notario", "testigo", "causa", "villa", "iglesia"]
    for _ in range(30):
        n_sent = int(rng.integers(1, 6))
        text = " ".join(
            " ".join(str(rng.choice(words)) for _ in range(int(rng.integers(3, 9)))) + "."
            for _ in range(n_sent)
        )
        sentences = segmented(text)
        annotations = []
        for k, s in enumerate(sentences):
            lo, hi = s.char_range
            a = int(rng.integers(lo, hi))
            b = int(rng.integers(a + 1, hi + 1))
            annotations.append(((a, b), f"e{k}"))
        attached = attach_entities(sentences, annotations)
        for s in attached:
            for e in s.entities:
                assert e.surface == s.text[e.start : e.end]


def test_entities_sorted_by_start_then_end():
    sentences = segmented("Pedro de Cazalla fue con Padilla.")
    attached = attach_entities(
        sentences,
        [((25, 32), "e_padilla"), ((0, 16), "e_cazalla"), ((0, 5), "e_pedro")],
    )
    spans = [(e.start, e.end) for e in attached[0].entities]
    assert spans == sorted(spans)
    assert attached[0].entities[0].entity_id == "e_pedro"
