"""Word-level span extraction: aligner pass-through with validation.

The aligner itself is pluggable; whatever it returns is serialized
verbatim once it passes sanity checks against the clip. A failed or
nonsensical alignment raises before anything is written, so there are
never partial span files.
"""

from pathlib import Path
from typing import Protocol

import numpy as np

from .dataset import DatasetError, load_wav
from .formats import write_spans

Span = tuple[str, float, float]


class AlignmentFailure(RuntimeError):
    """The aligner crashed or produced spans inconsistent with the clip."""


class Aligner(Protocol):
    name: str

    def align(self, samples: np.ndarray, sample_rate: int, transcript: str) -> list[Span]:
        ...


class EvenAligner:
    """Baseline aligner: splits the clip evenly across the transcript words.

    Real timestamps need a forced aligner or a timestamp-capable recognizer;
    this exists so the span pipeline runs without one.
    """

    name = "even"

    def align(self, samples: np.ndarray, sample_rate: int, transcript: str) -> list[Span]:
        words = transcript.split()
        duration = samples.size / sample_rate
        step = duration / len(words)
        return [(word, i * step, (i + 1) * step) for i, word in enumerate(words)]


def extract_word_spans(
    audio_path, transcript: str, aligner: Aligner, out_path=None
) -> list[Span]:
    """Align one clip and optionally write the spans as JSON.

    Returns the aligner's spans untouched. Raises DatasetError for unusable
    inputs and AlignmentFailure when the aligner errors or emits spans that
    are unsorted, negative, empty, or past the end of the clip.
    """
    if not transcript or not transcript.strip():
        raise DatasetError(f"{audio_path}: transcript is empty")
    samples, rate = load_wav(audio_path)
    duration = samples.size / rate
    try:
        spans = aligner.align(samples, rate, transcript)
    except Exception as exc:
        raise AlignmentFailure(f"{audio_path}: aligner failed ({exc})") from exc
    if not spans:
        raise AlignmentFailure(f"{audio_path}: aligner returned no spans")
    for word, start_s, end_s in spans:
        if not word:
            raise AlignmentFailure(f"{audio_path}: empty word label in spans")
        if start_s < 0 or end_s <= start_s:
            raise AlignmentFailure(
                f"{audio_path}: span {word!r} has bad interval [{start_s}, {end_s}]"
            )
        if end_s > duration + 1e-9:
            raise AlignmentFailure(
                f"{audio_path}: span {word!r} ends at {end_s} s, clip lasts {duration} s"
            )
    starts = [start_s for _, start_s, _ in spans]
    if starts != sorted(starts):
        raise AlignmentFailure(f"{audio_path}: spans are not sorted by start time")
    if out_path is not None:
        write_spans(spans, Path(out_path))
    return spans
