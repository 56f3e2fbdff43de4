"""Writers for the ESEQ, manifest, and word-span file formats.

These are the only interfaces shared with the scoring side, so they are
implemented here from the wire definitions rather than imported: a second
independent implementation keeps the formats honest, and the tests load
everything written here through the scoring package to prove it.

All writes are atomic (temp file + rename), so a crashed run never leaves
a truncated file behind.
"""

import json
import os
import struct
from pathlib import Path

import numpy as np

ESEQ_MAGIC = b"ESEQ"
ESEQ_VERSION = 1
MANIFEST_VERSION = 1

_HEADER = struct.Struct("<4sIII")


class FormatError(ValueError):
    """Data that cannot be represented in the wire format."""


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def write_eseq(frames: np.ndarray, path) -> None:
    """Write one utterance's frame matrix: 16-byte header + float32 rows.

    The header packs the magic, format version, frame count, and dimension
    as little-endian u32 after the 4-byte magic.
    """
    frames = np.asarray(frames)
    if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 1:
        raise FormatError(f"frames must be a nonempty 2-D array, got shape {frames.shape}")
    values = np.ascontiguousarray(frames, dtype="<f4")
    if not np.isfinite(values).all():
        raise FormatError("frame values do not fit the 32-bit wire format")
    t, d = values.shape
    _atomic_write(Path(path), _HEADER.pack(ESEQ_MAGIC, ESEQ_VERSION, t, d) + values.tobytes())


def read_eseq(path) -> np.ndarray:
    """Read an ESEQ file back; used for self-checks and round-trip tests."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: shorter than the {_HEADER.size}-byte header")
    magic, version, t, d = _HEADER.unpack_from(data)
    if magic != ESEQ_MAGIC or version != ESEQ_VERSION:
        raise FormatError(f"{path}: bad magic or version ({magic!r}, {version})")
    if len(data) - _HEADER.size < 4 * t * d:
        raise FormatError(f"{path}: payload shorter than the declared {t}x{d}")
    return np.frombuffer(data, dtype="<f4", count=t * d, offset=_HEADER.size).reshape(t, d)


def write_manifest(
    path,
    frame_rate_hz: float,
    languages: list[str],
    items: list[dict],
    extra: dict | None = None,
) -> None:
    """Write a corpus manifest as JSON with a stable key order.

    Each item is {"id": ..., "utterances": {lang: {"path", "frames", "dim",
    "duration_s"}}}. Extra keys carry provenance and must not collide with
    the manifest's own fields.
    """
    doc = {
        "version": MANIFEST_VERSION,
        "frame_rate_hz": frame_rate_hz,
        "languages": list(languages),
        "items": items,
    }
    for key, value in sorted((extra or {}).items()):
        if key in doc:
            raise FormatError(f"extra key {key!r} collides with a manifest field")
        doc[key] = value
    _atomic_write(Path(path), (json.dumps(doc, indent=2) + "\n").encode("utf-8"))


def write_spans(spans: list[tuple[str, float, float]], path) -> None:
    """Write word spans as the JSON list schema: {word, start_s, end_s}."""
    doc = [
        {"word": word, "start_s": start_s, "end_s": end_s}
        for word, start_s, end_s in spans
    ]
    _atomic_write(Path(path), (json.dumps(doc, indent=2) + "\n").encode("utf-8"))
