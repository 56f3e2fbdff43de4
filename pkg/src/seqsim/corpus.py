"""Embedding-sequence wire format, corpus manifests, and frame bookkeeping.

An utterance is a sequence of frame embeddings stored as an ESEQ file: a
16-byte header (magic ``ESEQ``, format version, frame count T, dimension d,
unsigned 32-bit little-endian) followed by T*d little-endian float32 values
in row-major order. A corpus is a JSON manifest mapping content items to one
utterance file per language.

Values travel as float32 on disk but are held as float64 in memory so that
downstream accumulation (norms, means, dot products) does not add drift on
top of the wire precision.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

ESEQ_MAGIC = b"ESEQ"
ESEQ_VERSION = 1
MANIFEST_VERSION = 1
DEFAULT_FRAME_RATE_HZ = 50.0

# Rows with L2 norm below this are treated as corrupt input: real encoder
# outputs are never exactly zero, so a zero row signals a broken file.
ZERO_NORM = 1e-12
# Norm tolerance for sequences flagged as row-normalized.
UNIT_NORM_TOL = 1e-6

_HEADER = struct.Struct("<4sIII")


class ValidationError(Exception):
    """Invalid input data, file format, or configuration (CLI exit code 2)."""


class ComputationError(Exception):
    """Failure while computing results from valid inputs (CLI exit code 1)."""


class CorpusError(ValidationError):
    """Base class for corpus ingestion failures."""


class BadMagic(CorpusError):
    pass


class BadVersion(CorpusError):
    pass


class Truncated(CorpusError):
    pass


class TrailingData(CorpusError):
    pass


class NonFiniteValue(CorpusError):
    pass


class ZeroNormRow(CorpusError):
    pass


class ManifestError(CorpusError):
    pass


class SpanError(ValidationError):
    """Word span malformed or inconsistent with its utterance."""


class ZeroNormMean(ComputationError):
    """An averaged embedding vector collapsed to numerical zero."""


@dataclass(frozen=True)
class EmbeddingSequence:
    """One utterance's T x d frame-embedding matrix plus identity metadata.

    Frames are coerced to a read-only float64 array at construction and the
    instance is immutable afterwards, so sequences are safe to share across
    threads. Every row must be finite with norm above ZERO_NORM; sequences
    flagged ``normalized`` must additionally have unit rows.
    """

    item_id: str
    language: str
    frames: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        frames = np.ascontiguousarray(self.frames, dtype=np.float64)
        if frames.ndim != 2:
            raise CorpusError(f"frames must be 2-D, got shape {frames.shape}")
        t, d = frames.shape
        if t < 1 or d < 1:
            raise CorpusError(f"need T >= 1 and d >= 1, got T={t}, d={d}")
        finite = np.isfinite(frames)
        if not finite.all():
            row = int(np.where(~finite.all(axis=1))[0][0])
            raise NonFiniteValue(f"row {row} contains a non-finite value")
        norms = np.linalg.norm(frames, axis=1)
        small = np.where(norms < ZERO_NORM)[0]
        if small.size:
            raise ZeroNormRow(f"row {int(small[0])} has norm below {ZERO_NORM}")
        if self.normalized:
            off = np.abs(norms - 1.0)
            if off.max() > UNIT_NORM_TOL:
                row = int(np.argmax(off))
                raise CorpusError(
                    f"flagged normalized but row {row} has norm {norms[row]!r}"
                )
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


def load_sequence(path, item_id: str | None = None, language: str | None = None) -> EmbeddingSequence:
    """Read one ESEQ file and validate it.

    Args:
      path: file to read.
      item_id: identity to attach; defaults to the file stem.
      language: language code to attach; defaults to "und" (undetermined).

    Raises:
      CorpusError: unreadable file, bad magic or version, truncated or
        oversized payload, non-finite value, or zero-norm row; messages name
        the offending row where applicable.
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CorpusError(f"{path}: {exc}") from None
    if len(data) < _HEADER.size:
        raise Truncated(f"{path}: file shorter than the {_HEADER.size}-byte header")
    magic, version, t, d = _HEADER.unpack_from(data)
    if magic != ESEQ_MAGIC:
        raise BadMagic(f"{path}: bad magic {magic!r}, expected {ESEQ_MAGIC!r}")
    if version != ESEQ_VERSION:
        raise BadVersion(f"{path}: unsupported version {version}, expected {ESEQ_VERSION}")
    if t < 1 or d < 1:
        raise CorpusError(f"{path}: header declares T={t}, d={d}; both must be >= 1")
    payload = len(data) - _HEADER.size
    expected = 4 * t * d
    if payload < expected:
        raise Truncated(
            f"{path}: declares {t} rows of dim {d} but payload holds only "
            f"{payload // (4 * d)} full rows"
        )
    if payload > expected:
        raise TrailingData(f"{path}: {payload - expected} unexpected bytes after {t}*{d} values")
    values = np.frombuffer(data, dtype="<f4", count=t * d, offset=_HEADER.size).reshape(t, d)
    try:
        return EmbeddingSequence(item_id or path.stem, language or "und", values)
    except CorpusError as exc:
        raise type(exc)(f"{path}: {exc}") from None


def write_sequence(seq: EmbeddingSequence, path) -> None:
    """Write an ESEQ file; in-memory float64 frames are cast to the float32 wire type."""
    values = np.ascontiguousarray(seq.frames, dtype="<f4")
    if not np.isfinite(values).all():
        raise CorpusError("frame values do not fit the 32-bit wire format")
    header = _HEADER.pack(ESEQ_MAGIC, ESEQ_VERSION, seq.n_frames, seq.dim)
    Path(path).write_bytes(header + values.tobytes())


def normalize_rows(seq: EmbeddingSequence) -> EmbeddingSequence:
    """Scale every row to unit Euclidean norm.

    Already-normalized sequences are returned unchanged, which makes the
    operation exactly idempotent. Zero rows cannot occur here because they
    are rejected at construction.
    """
    if seq.normalized:
        return seq
    norms = np.linalg.norm(seq.frames, axis=1, keepdims=True)
    return EmbeddingSequence(seq.item_id, seq.language, seq.frames / norms, normalized=True)


def trim_padding(seq: EmbeddingSequence, audio_duration_s: float, frame_rate_hz: float) -> EmbeddingSequence:
    """Keep the leading frames that cover the true audio duration.

    Fixed-window encoders emit frames for the silent padding tail as well;
    those carry no content, so only the first ceil(duration * rate) rows are
    kept. Metadata and the normalized flag are preserved.
    """
    if audio_duration_s <= 0:
        raise ValidationError(f"audio duration must be positive, got {audio_duration_s}")
    if frame_rate_hz <= 0:
        raise ValidationError(f"frame rate must be positive, got {frame_rate_hz}")
    keep = math.ceil(audio_duration_s * frame_rate_hz)
    if keep > seq.n_frames:
        raise ValidationError(
            f"duration {audio_duration_s} s at {frame_rate_hz} Hz needs {keep} frames, "
            f"sequence has only {seq.n_frames}"
        )
    if keep == seq.n_frames:
        return seq
    return EmbeddingSequence(seq.item_id, seq.language, seq.frames[:keep], seq.normalized)


@dataclass(frozen=True)
class WordSpan:
    """One word's time interval within an utterance, in seconds."""

    word: str
    start_s: float
    end_s: float

    def __post_init__(self):
        if self.start_s < 0:
            raise SpanError(f"span {self.word!r}: start {self.start_s} is negative")
        if self.end_s <= self.start_s:
            raise SpanError(f"span {self.word!r}: end {self.end_s} not after start {self.start_s}")


def span_frame_range(span: WordSpan, frame_rate_hz: float) -> tuple[int, int]:
    """Half-open frame-index range covering a span, at least one frame wide."""
    start = math.floor(span.start_s * frame_rate_hz)
    end = max(start + 1, math.ceil(span.end_s * frame_rate_hz))
    return start, end


def word_embeddings(
    seq: EmbeddingSequence, spans: Sequence[WordSpan], frame_rate_hz: float
) -> list[tuple[str, np.ndarray]]:
    """Average the frames under each span and unit-normalize the averages.

    Normalization is applied to the averaged vector, not to the input rows,
    so the sequence itself may be raw or normalized.

    Returns:
      One (word, unit vector) pair per span, in input order.
    """
    out = []
    for span in spans:
        start, end = span_frame_range(span, frame_rate_hz)
        if end > seq.n_frames:
            raise SpanError(
                f"span {span.word!r} ends at frame {end}, sequence has {seq.n_frames}"
            )
        mean = seq.frames[start:end].mean(axis=0)
        norm = float(np.linalg.norm(mean))
        if norm < ZERO_NORM:
            raise ZeroNormMean(f"span {span.word!r} averages to a zero vector")
        out.append((span.word, mean / norm))
    return out


def load_word_spans(path) -> list[WordSpan]:
    """Read a JSON list of {word, start_s, end_s}, sorted by start time."""
    path = Path(path)
    try:
        data = json.loads(path.read_text("utf-8"))
    except OSError as exc:
        raise SpanError(f"{path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise SpanError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(data, list):
        raise SpanError(f"{path}: expected a JSON list of spans")
    spans = []
    for i, entry in enumerate(data):
        try:
            spans.append(WordSpan(str(entry["word"]), float(entry["start_s"]), float(entry["end_s"])))
        except (TypeError, KeyError, ValueError) as exc:
            raise SpanError(f"{path}: span {i} malformed ({exc!r})") from None
    for prev, cur in zip(spans, spans[1:]):
        if cur.start_s < prev.start_s:
            raise SpanError(
                f"{path}: spans not sorted by start_s ({cur.word!r} starts before {prev.word!r})"
            )
    return spans


@dataclass(frozen=True)
class UtteranceRef:
    """Manifest entry locating one utterance file and its declared shape."""

    path: str
    frames: int
    dim: int
    duration_s: float | None = None


@dataclass(frozen=True)
class ManifestItem:
    """One content item with its per-language utterances."""

    item_id: str
    utterances: Mapping[str, UtteranceRef]


@dataclass(frozen=True)
class CorpusManifest:
    """Index of an n-way parallel corpus: items x languages -> ESEQ files.

    ``root`` is the directory relative paths resolve against (the manifest's
    own directory when loaded from disk). ``extra`` carries unrecognized
    top-level JSON keys, e.g. generator provenance, and round-trips through
    save_manifest.
    """

    version: int
    frame_rate_hz: float
    languages: tuple[str, ...]
    items: tuple[ManifestItem, ...]
    root: Path | None = None
    extra: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if not (math.isfinite(self.frame_rate_hz) and self.frame_rate_hz > 0):
            raise ManifestError(f"frame_rate_hz must be positive, got {self.frame_rate_hz}")
        if not self.languages:
            raise ManifestError("manifest lists no languages")
        if len(set(self.languages)) != len(self.languages):
            raise ManifestError("duplicate language codes in manifest")
        seen_ids = set()
        dim = None
        for item in self.items:
            if item.item_id in seen_ids:
                raise ManifestError(f"duplicate item id {item.item_id!r}")
            seen_ids.add(item.item_id)
            for lang, ref in item.utterances.items():
                if lang not in self.languages:
                    raise ManifestError(
                        f"item {item.item_id!r} names language {lang!r} missing from the manifest list"
                    )
                if ref.frames < 1 or ref.dim < 1:
                    raise ManifestError(
                        f"item {item.item_id!r} ({lang}): frames and dim must be >= 1"
                    )
                if dim is None:
                    dim = ref.dim
                elif ref.dim != dim:
                    raise ManifestError(
                        f"item {item.item_id!r} ({lang}) has dim {ref.dim}, corpus dim is {dim}"
                    )

    @property
    def dim(self) -> int | None:
        for item in self.items:
            for ref in item.utterances.values():
                return ref.dim
        return None


_MANIFEST_KEYS = ("version", "frame_rate_hz", "languages", "items")


def load_manifest(path) -> CorpusManifest:
    """Read and validate a corpus manifest; paths stay relative to its directory."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text("utf-8"))
    except OSError as exc:
        raise ManifestError(f"{path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ManifestError(f"{path}: manifest must be a JSON object")
    try:
        items = []
        for entry in raw["items"]:
            utterances = {}
            for lang, ref in entry["utterances"].items():
                duration = ref.get("duration_s")
                utterances[str(lang)] = UtteranceRef(
                    path=str(ref["path"]),
                    frames=int(ref["frames"]),
                    dim=int(ref["dim"]),
                    duration_s=None if duration is None else float(duration),
                )
            items.append(ManifestItem(item_id=str(entry["id"]), utterances=utterances))
        manifest = CorpusManifest(
            version=int(raw["version"]),
            frame_rate_hz=float(raw["frame_rate_hz"]),
            languages=tuple(str(l) for l in raw["languages"]),
            items=tuple(items),
            root=path.parent,
            extra={k: v for k, v in raw.items() if k not in _MANIFEST_KEYS},
        )
    except ManifestError as exc:
        raise ManifestError(f"{path}: {exc}") from None
    except (TypeError, KeyError, ValueError, AttributeError) as exc:
        raise ManifestError(f"{path}: malformed manifest ({exc!r})") from None
    return manifest


def save_manifest(manifest: CorpusManifest, path) -> None:
    """Write a manifest as JSON with a stable key order (byte-reproducible)."""
    items = []
    for item in manifest.items:
        utterances = {}
        for lang, ref in item.utterances.items():
            entry = {"path": ref.path, "frames": ref.frames, "dim": ref.dim}
            if ref.duration_s is not None:
                entry["duration_s"] = ref.duration_s
            utterances[lang] = entry
        items.append({"id": item.item_id, "utterances": utterances})
    doc = {
        "version": manifest.version,
        "frame_rate_hz": manifest.frame_rate_hz,
        "languages": list(manifest.languages),
        "items": items,
    }
    for key, value in manifest.extra.items():
        if key not in _MANIFEST_KEYS:
            doc[key] = value
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", "utf-8")


def load_utterance(manifest: CorpusManifest, item: ManifestItem, language: str) -> EmbeddingSequence:
    """Load one utterance via the manifest, cross-checking the declared shape."""
    ref = item.utterances.get(language)
    if ref is None:
        raise ManifestError(f"item {item.item_id!r} has no {language!r} utterance")
    base = manifest.root if manifest.root is not None else Path(".")
    seq = load_sequence(base / ref.path, item_id=item.item_id, language=language)
    if seq.n_frames != ref.frames or seq.dim != ref.dim:
        raise ManifestError(
            f"{ref.path}: manifest declares {ref.frames}x{ref.dim}, "
            f"file holds {seq.n_frames}x{seq.dim}"
        )
    return seq


def sequences_for_language(manifest: CorpusManifest, language: str) -> list[EmbeddingSequence]:
    """All utterances of one language, in manifest item order."""
    if language not in manifest.languages:
        raise ManifestError(
            f"language {language!r} not in manifest (has {', '.join(manifest.languages)})"
        )
    return [
        load_utterance(manifest, item, language)
        for item in manifest.items
        if language in item.utterances
    ]
