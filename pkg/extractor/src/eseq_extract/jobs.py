"""Extraction jobs: run an encoder over a dataset and emit ESEQ corpora.

The dataset is filtered the way n-way parallel evaluation needs it: when an
(item, language) cell holds several recordings, the one with the smallest
utterance id is kept, and items missing from any selected language are
dropped. Both counts are recorded in the emitted manifests.

Audio is padded or chunked into the encoder's fixed window, the window
embeddings are concatenated, and the frames covering the declared duration
are kept: ceil(duration_s * frame_rate_hz) rows. The declared duration
governs trimming; it is an error for it to need more frames than the audio
produced.
"""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .backend import EncoderBackend, load_backend
from .dataset import DatasetError, Utterance, load_wav
from .formats import write_eseq, write_manifest


@dataclass(frozen=True)
class ExtractionJob:
    utterances: tuple[Utterance, ...]
    out_dir: Path
    model: str = "synthetic"
    layers: tuple[int, ...] | None = None
    languages: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "out_dir", Path(self.out_dir))
        object.__setattr__(self, "utterances", tuple(self.utterances))
        if not self.utterances:
            raise DatasetError("job has no utterances")
        if self.layers is not None:
            object.__setattr__(self, "layers", tuple(int(l) for l in self.layers))
            if not self.layers:
                raise DatasetError("layer list is empty; omit it to use the final layer")
        if self.languages is not None:
            object.__setattr__(self, "languages", tuple(self.languages))
            if len(set(self.languages)) != len(self.languages):
                raise DatasetError("duplicate language codes in selection")


def _select(job: ExtractionJob) -> tuple[list[str], dict[str, dict[str, Utterance]], int, int]:
    """Apply parallel-corpus filtering; returns languages, item -> lang -> utt."""
    if job.languages is not None:
        languages = list(job.languages)
    else:
        languages = sorted({u.language for u in job.utterances})
    wanted = set(languages)

    cells: dict[tuple[str, str], Utterance] = {}
    deduped = 0
    for utt in job.utterances:
        if utt.language not in wanted:
            continue
        key = (utt.item_id, utt.language)
        held = cells.get(key)
        if held is None:
            cells[key] = utt
        else:
            deduped += 1
            if utt.utt_id < held.utt_id:
                cells[key] = utt
    items: dict[str, dict[str, Utterance]] = {}
    for (item_id, language), utt in cells.items():
        items.setdefault(item_id, {})[language] = utt
    complete = {k: v for k, v in items.items() if set(v) == wanted}
    dropped = len(items) - len(complete)
    if not complete:
        raise DatasetError("no items are present in all selected languages")
    return languages, complete, dropped, deduped


def _embed_utterance(
    utt: Utterance, backend: EncoderBackend, layers: Sequence[int]
) -> dict[int, np.ndarray]:
    """Window, encode, and trim one utterance; returns layer -> frames."""
    samples, rate = load_wav(utt.audio_path)
    if rate != backend.sample_rate:
        raise DatasetError(
            f"{utt.audio_path}: sampled at {rate} Hz, encoder expects {backend.sample_rate}"
        )
    window = round(backend.window_s * backend.sample_rate)
    n_windows = max(1, math.ceil(samples.size / window))
    padded = np.zeros(n_windows * window)
    padded[: samples.size] = samples

    chunks: dict[int, list[np.ndarray]] = {layer: [] for layer in layers}
    for w in range(n_windows):
        encoded = backend.encode(padded[w * window : (w + 1) * window], layers)
        for layer in layers:
            chunks[layer].append(encoded[layer])

    keep = math.ceil(utt.duration_s * backend.frame_rate_hz)
    out = {}
    for layer in layers:
        frames = np.concatenate(chunks[layer], axis=0)
        if keep > frames.shape[0]:
            raise DatasetError(
                f"{utt.audio_path}: duration {utt.duration_s} s needs {keep} frames, "
                f"audio produced {frames.shape[0]}"
            )
        out[layer] = frames[:keep]
    return out


def extract(job: ExtractionJob, backend: EncoderBackend | None = None) -> list[Path]:
    """Run the job; returns one manifest path per requested layer.

    With an explicit layer list, each layer's corpus lands in
    out_dir/layer-NN/ with an identical directory structure; without one,
    the final layer's corpus is written at out_dir directly.
    """
    if backend is None:
        backend = load_backend(job.model)
    if job.layers is None:
        layers = [backend.n_layers - 1]
        layer_dirs = {layers[0]: job.out_dir}
    else:
        layers = list(job.layers)
        layer_dirs = {layer: job.out_dir / f"layer-{layer:02d}" for layer in layers}
    for layer in layers:
        if not 0 <= layer < backend.n_layers:
            raise DatasetError(
                f"layer {layer} outside the encoder's range [0, {backend.n_layers})"
            )

    languages, items, dropped, deduped = _select(job)
    manifest_items: dict[int, list[dict]] = {layer: [] for layer in layers}
    for item_id in sorted(items):
        refs: dict[int, dict] = {layer: {} for layer in layers}
        for language in languages:
            utt = items[item_id][language]
            embedded = _embed_utterance(utt, backend, layers)
            rel = f"{language}/{item_id}.eseq"
            for layer, frames in embedded.items():
                write_eseq(frames, layer_dirs[layer] / rel)
                refs[layer][language] = {
                    "path": rel,
                    "frames": int(frames.shape[0]),
                    "dim": int(frames.shape[1]),
                    "duration_s": utt.duration_s,
                }
        for layer in layers:
            manifest_items[layer].append({"id": item_id, "utterances": refs[layer]})

    paths = []
    for layer in layers:
        manifest_path = layer_dirs[layer] / "manifest.json"
        write_manifest(
            manifest_path,
            frame_rate_hz=backend.frame_rate_hz,
            languages=languages,
            items=manifest_items[layer],
            extra={
                "extract": {
                    "model": backend.name,
                    "layer": layer,
                    "window_s": backend.window_s,
                    "items_dropped": dropped,
                    "utterances_deduped": deduped,
                }
            },
        )
        paths.append(manifest_path)
    return paths
