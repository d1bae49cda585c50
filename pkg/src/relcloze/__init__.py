"""Open relation extraction for historical Spanish documents.

The pipeline biases a pretrained masked-LM encoder toward the target
semantic field, realizes each relation instance as a cloze prompt (including
an anaphoric prompt for isolated entities), clusters the mask hidden states
with cosine K-means, and scores the clusters against expert gold labels.
"""

from .biasing import BiasingConfig, BiasingReport, ModelRegistry, make_masked_examples, run_biasing
from .clustering import (
    ClusteringConfig,
    ClusteringResult,
    kmeans_assign,
    kmeans_fit,
    normalize_embeddings,
)
from .corpus import (
    AnnotatedSentence,
    BiasingChunk,
    Document,
    EntityHistogram,
    EntityMention,
    NormalizationRule,
    RelationInstance,
    SegmentationRules,
    TerminatorRule,
    WordStats,
    attach_entities,
    build_biasing_chunks,
    entity_histogram,
    filter_by_entity_count,
    generate_instances,
    normalize_document,
    segment_sentences,
    word_stats,
)
from .encoders import (
    Encoder,
    MaskEmbedding,
    MaskedExample,
    MockEncoder,
    TinyMlmEncoder,
    TokenizedPrompt,
    TopKPrediction,
    TrainConfig,
    WhitespaceVocab,
)
from .evaluation import (
    BinaryCells,
    ConfusionMatrix,
    EvalReport,
    Metrics,
    align_clusters,
    build_report,
    compare_runs,
    compute_metrics,
)
from .pipeline import RunManifest, execute_stage, load_config, make_report
from .templates import (
    FilledPrompt,
    PromptTemplate,
    builtin_templates,
    fill_template,
    truncate_for_budget,
)

__version__ = "0.1.0"

__all__ = [
    "AnnotatedSentence",
    "BiasingChunk",
    "BiasingConfig",
    "BiasingReport",
    "BinaryCells",
    "ClusteringConfig",
    "ClusteringResult",
    "ConfusionMatrix",
    "Document",
    "Encoder",
    "EntityHistogram",
    "EntityMention",
    "EvalReport",
    "FilledPrompt",
    "MaskEmbedding",
    "MaskedExample",
    "Metrics",
    "MockEncoder",
    "ModelRegistry",
    "NormalizationRule",
    "PromptTemplate",
    "RelationInstance",
    "RunManifest",
    "SegmentationRules",
    "TerminatorRule",
    "TinyMlmEncoder",
    "TokenizedPrompt",
    "TopKPrediction",
    "TrainConfig",
    "WhitespaceVocab",
    "WordStats",
    "align_clusters",
    "attach_entities",
    "build_biasing_chunks",
    "build_report",
    "builtin_templates",
    "compare_runs",
    "compute_metrics",
    "entity_histogram",
    "execute_stage",
    "fill_template",
    "filter_by_entity_count",
    "generate_instances",
    "kmeans_assign",
    "kmeans_fit",
    "load_config",
    "make_masked_examples",
    "make_report",
    "normalize_document",
    "normalize_embeddings",
    "run_biasing",
    "segment_sentences",
    "truncate_for_budget",
    "word_stats",
]
