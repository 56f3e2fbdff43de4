"""Dataset descriptors and audio decoding.

A descriptor is a JSON file listing utterances with their audio paths,
languages, item ids, durations, and optional transcripts:

    {"utterances": [{"id": "u1", "item_id": "s1", "language": "en",
                     "audio": "en/u1.wav", "duration_s": 6.1,
                     "transcript": "hello world"}, ...]}

Several utterances may share an (item_id, language) cell when a sentence
was recorded more than once; extraction keeps one per cell. Audio paths
resolve against the descriptor's directory.
"""

import json
import math
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DatasetError(ValueError):
    """Descriptor or audio input that cannot be used."""


@dataclass(frozen=True)
class Utterance:
    utt_id: str
    item_id: str
    language: str
    audio_path: Path
    duration_s: float
    transcript: str | None = None

    def __post_init__(self):
        if not (math.isfinite(self.duration_s) and self.duration_s > 0):
            raise DatasetError(
                f"utterance {self.utt_id!r}: duration must be positive, got {self.duration_s}"
            )


def load_dataset(path) -> list[Utterance]:
    """Read a descriptor; every utterance must carry a positive duration."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text("utf-8"))
    except OSError as exc:
        raise DatasetError(f"{path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(raw, dict) or not isinstance(raw.get("utterances"), list):
        raise DatasetError(f"{path}: expected an object with an 'utterances' list")
    utterances = []
    for i, entry in enumerate(raw["utterances"]):
        try:
            utt_id = str(entry["id"])
            if "duration_s" not in entry:
                raise DatasetError(f"utterance {utt_id!r}: duration metadata missing")
            transcript = entry.get("transcript")
            utterances.append(
                Utterance(
                    utt_id=utt_id,
                    item_id=str(entry.get("item_id", entry["id"])),
                    language=str(entry["language"]),
                    audio_path=path.parent / str(entry["audio"]),
                    duration_s=float(entry["duration_s"]),
                    transcript=None if transcript is None else str(transcript),
                )
            )
        except DatasetError:
            raise
        except (TypeError, KeyError, ValueError) as exc:
            raise DatasetError(f"{path}: utterance {i} malformed ({exc!r})") from None
    if not utterances:
        raise DatasetError(f"{path}: descriptor lists no utterances")
    seen = set()
    for utt in utterances:
        if utt.utt_id in seen:
            raise DatasetError(f"duplicate utterance id {utt.utt_id!r}")
        seen.add(utt.utt_id)
    return utterances


def load_wav(path) -> tuple[np.ndarray, int]:
    """Decode a PCM WAV file to mono float64 in [-1, 1] plus its sample rate."""
    try:
        with wave.open(str(path), "rb") as handle:
            rate = handle.getframerate()
            width = handle.getsampwidth()
            channels = handle.getnchannels()
            data = handle.readframes(handle.getnframes())
    except (OSError, wave.Error, EOFError) as exc:
        raise DatasetError(f"{path}: cannot decode audio ({exc})") from None
    if width == 2:
        samples = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    elif width == 4:
        samples = np.frombuffer(data, dtype="<i4").astype(np.float64) / 2147483648.0
    else:
        raise DatasetError(f"{path}: unsupported sample width {width} bytes")
    if channels > 1:
        samples = samples.reshape(-1, channels).mean(axis=1)
    return samples, rate


def write_wav(samples: np.ndarray, rate: int, path) -> None:
    """Write mono 16-bit PCM; the inverse of load_wav for fixtures and tools."""
    scaled = np.asarray(samples, dtype=np.float64) * 32768.0
    pcm = np.clip(np.rint(scaled), -32768, 32767).astype("<i2")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with wave.open(str(path), "wb") as handle:
        handle.setnchannels(1)
        handle.setsampwidth(2)
        handle.setframerate(rate)
        handle.writeframes(pcm.tobytes())
