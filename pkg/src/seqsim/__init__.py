"""Sequence-similarity scoring and cross-lingual retrieval for frame embeddings."""

__version__ = "0.1.0"

from .corpus import (
    CorpusManifest,
    EmbeddingSequence,
    WordSpan,
    load_manifest,
    load_sequence,
    normalize_rows,
    trim_padding,
    word_embeddings,
    write_sequence,
)
from .metrics import MetricSpec, avgsim, dtwsim, gram, otsim, seqsim, similarity
from .retrieval import RetrievalReport, ScoreMatrix, grid, retrieve, score_all, sweep
from .synth import SynthConfig, generate, random_scorer

__all__ = [
    "CorpusManifest",
    "EmbeddingSequence",
    "MetricSpec",
    "RetrievalReport",
    "ScoreMatrix",
    "SynthConfig",
    "WordSpan",
    "avgsim",
    "dtwsim",
    "generate",
    "gram",
    "grid",
    "load_manifest",
    "load_sequence",
    "normalize_rows",
    "otsim",
    "random_scorer",
    "retrieve",
    "score_all",
    "seqsim",
    "similarity",
    "sweep",
    "trim_padding",
    "word_embeddings",
    "write_sequence",
]
