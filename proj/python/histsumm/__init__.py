"""Historical text summarisation through embedding alignment and encoder swap."""

from ._histsumm import (
    ConfigError,
    EmptyInputError,
    Error,
    ParseError,
    ValidationError,
    clean_text,
    compute_stats,
    convert_glyphs,
    csls_scores,
    evaluate,
    feature_ngrams,
    fnv1a,
    load_config,
    load_embeddings,
    normalize_spaces,
    normalize_spelling,
    procrustes,
    rouge_l,
    rouge_n,
    run,
    segment_sentences,
    self_learn,
    write_toy_corpus,
)

__all__ = [
    "ConfigError",
    "EmptyInputError",
    "Error",
    "ParseError",
    "ValidationError",
    "clean_text",
    "compute_stats",
    "convert_glyphs",
    "csls_scores",
    "evaluate",
    "feature_ngrams",
    "fnv1a",
    "load_config",
    "load_embeddings",
    "normalize_spaces",
    "normalize_spelling",
    "procrustes",
    "rouge_l",
    "rouge_n",
    "run",
    "segment_sentences",
    "self_learn",
    "write_toy_corpus",
]
