"""Synthetic n-way parallel embedding corpora from a latent-word model.

Each content item draws a few latent unit "word" vectors; each language
renders every word as a short run of noisy frames, optionally with the word
order shuffled per language. The corpora exercise the retrieval stack end to
end (shared semantic space, word-order divergence, length divergence) with
no speech model involved.
"""

from __future__ import annotations

import math
import string
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .corpus import (
    DEFAULT_FRAME_RATE_HZ,
    CorpusManifest,
    EmbeddingSequence,
    ManifestItem,
    UtteranceRef,
    ValidationError,
    save_manifest,
    write_sequence,
)
from .retrieval import ScoreMatrix


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the synthetic corpus generator.

    words_per_item and frames_per_word are inclusive [low, high] ranges.
    noise_sigma scales a uniformly random unit direction added to each
    frame's word vector before re-normalization, so sigma relates directly
    to the expected frame-to-word cosine 1 / sqrt(1 + sigma^2).
    """

    n_items: int
    d: int
    words_per_item: tuple[int, int] = (3, 8)
    frames_per_word: tuple[int, int] = (2, 6)
    noise_sigma: float = 0.3
    shuffle_word_order: bool = True
    n_languages: int = 2
    seed: int = 0
    frame_rate_hz: float = DEFAULT_FRAME_RATE_HZ

    def __post_init__(self):
        if self.n_items < 2:
            raise ValidationError(f"n_items must be >= 2, got {self.n_items}")
        if self.d < 2:
            raise ValidationError(f"d must be >= 2, got {self.d}")
        for name, (low, high) in (
            ("words_per_item", self.words_per_item),
            ("frames_per_word", self.frames_per_word),
        ):
            if low < 1 or high < low:
                raise ValidationError(f"{name} range [{low}, {high}] is empty or non-positive")
        if self.noise_sigma < 0:
            raise ValidationError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.n_languages < 2:
            raise ValidationError(f"n_languages must be >= 2, got {self.n_languages}")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        if not (self.frame_rate_hz > 0):
            raise ValidationError(f"frame_rate_hz must be positive, got {self.frame_rate_hz}")


def language_codes(n: int) -> list[str]:
    """Two-letter synthetic language codes: aa, ab, ac, ..."""
    letters = string.ascii_lowercase
    if n > len(letters) ** 2:
        raise ValidationError(f"at most {len(letters) ** 2} languages supported, got {n}")
    return [letters[i // 26] + letters[i % 26] for i in range(n)]


def _unit_rows(rng: np.random.Generator, rows: int, dim: int) -> np.ndarray:
    vectors = rng.standard_normal((rows, dim))
    return vectors / np.linalg.norm(vectors, axis=1, keepdims=True)


def _safe_duration(frames: int, rate: float) -> float:
    """Largest float duration whose ceil(duration * rate) stays within frames."""
    duration = frames / rate
    while math.ceil(duration * rate) > frames:
        duration = math.nextafter(duration, 0.0)
    return duration


def generate(config: SynthConfig, out_dir) -> CorpusManifest:
    """Render a synthetic corpus to disk and return its manifest.

    All randomness comes from a single PCG64 stream seeded with config.seed
    and consumed in a fixed order: per item, the word count and the word
    vectors; then per language, the word-order permutation (when shuffling),
    then per word its frame count and frame noise. Equal configs therefore
    produce byte-identical corpora.
    """
    out_dir = Path(out_dir)
    rng = np.random.Generator(np.random.PCG64(config.seed))
    languages = language_codes(config.n_languages)
    for language in languages:
        (out_dir / language).mkdir(parents=True, exist_ok=True)
    id_width = max(4, len(str(config.n_items - 1)))
    w_low, w_high = config.words_per_item
    f_low, f_high = config.frames_per_word
    items = []
    for index in range(config.n_items):
        item_id = f"item-{index:0{id_width}d}"
        n_words = int(rng.integers(w_low, w_high + 1))
        words = _unit_rows(rng, n_words, config.d)
        utterances = {}
        for language in languages:
            if config.shuffle_word_order:
                order = rng.permutation(n_words)
            else:
                order = np.arange(n_words)
            rendered = []
            for word_index in order:
                n_frames = int(rng.integers(f_low, f_high + 1))
                noise = _unit_rows(rng, n_frames, config.d)
                frames = words[word_index] + config.noise_sigma * noise
                rendered.append(frames / np.linalg.norm(frames, axis=1, keepdims=True))
            frames = np.concatenate(rendered, axis=0)
            seq = EmbeddingSequence(item_id, language, frames, normalized=True)
            rel_path = f"{language}/{item_id}.eseq"
            write_sequence(seq, out_dir / rel_path)
            utterances[language] = UtteranceRef(
                path=rel_path,
                frames=seq.n_frames,
                dim=seq.dim,
                duration_s=_safe_duration(seq.n_frames, config.frame_rate_hz),
            )
        items.append(ManifestItem(item_id=item_id, utterances=utterances))
    manifest = CorpusManifest(
        version=1,
        frame_rate_hz=config.frame_rate_hz,
        languages=tuple(languages),
        items=tuple(items),
        root=out_dir,
        extra={"synth": asdict(config)},
    )
    save_manifest(manifest, out_dir / "manifest.json")
    return manifest


def random_scorer(n_q: int, n_r: int, seed: int) -> ScoreMatrix:
    """Uniform random score matrix for chance-baseline calibration.

    Scores are uniform on [0, 1) from a PCG64 stream, deterministic per
    seed. Query and candidate ids follow the synthetic item naming, so an
    identity truth mapping works whenever n_q <= n_r.
    """
    if n_q < 1 or n_r < 1:
        raise ValidationError(f"matrix sizes must be >= 1, got {n_q} x {n_r}")
    rng = np.random.Generator(np.random.PCG64(seed))
    scores = rng.random((n_q, n_r))
    return ScoreMatrix(
        query_ids=tuple(f"item-{i:04d}" for i in range(n_q)),
        candidate_ids=tuple(f"item-{i:04d}" for i in range(n_r)),
        scores=scores,
        metric=None,
        query_language="a",
        candidate_language="b",
    )
