"""End-to-end extraction with the synthetic backend.

Everything emitted here is re-read through the scoring package, so these
tests double as a compatibility check between the two sides of the wire
formats.
"""

import json
import math

import numpy as np
import pytest

from eseq_extract.backend import SyntheticBackend
from eseq_extract.dataset import DatasetError, load_dataset
from eseq_extract.jobs import ExtractionJob, extract
from seqsim import corpus
from seqsim.metrics import MetricSpec
from seqsim.retrieval import pair_report


def tree_bytes(root):
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def test_trims_to_ceil_of_duration_times_rate(make_dataset, tmp_path):
    desc = make_dataset({"u1": {"language": "en", "freq": 220.0, "duration_s": 6.1}})
    job = ExtractionJob(load_dataset(desc), tmp_path / "out")
    (manifest_path,) = extract(job, SyntheticBackend())
    manifest = corpus.load_manifest(manifest_path)
    ref = manifest.items[0].utterances["en"]
    assert ref.frames == 305
    assert ref.duration_s == 6.1
    seq = corpus.load_utterance(manifest, manifest.items[0], "en")
    assert seq.n_frames == 305


def test_reextraction_is_byte_identical(make_dataset, tmp_path):
    desc = make_dataset(
        {
            "u1": {"language": "en", "item_id": "s1", "freq": 220.0, "duration_s": 2.3},
            "u2": {"language": "fr", "item_id": "s1", "freq": 311.0, "duration_s": 1.7},
        }
    )
    utts = load_dataset(desc)
    extract(ExtractionJob(utts, tmp_path / "a"), SyntheticBackend())
    extract(ExtractionJob(utts, tmp_path / "b"), SyntheticBackend())
    first = tree_bytes(tmp_path / "a")
    assert first == tree_bytes(tmp_path / "b")
    assert set(first) == {"manifest.json", "en/s1.eseq", "fr/s1.eseq"}


def test_layer_list_writes_one_manifest_per_layer(make_dataset, tmp_path):
    desc = make_dataset({"u1": {"language": "en", "freq": 140.0, "duration_s": 1.0}})
    job = ExtractionJob(load_dataset(desc), tmp_path / "out", layers=[0, 8, 16, 24, 32])
    paths = extract(job, SyntheticBackend(dim=8, n_layers=33))
    assert [p.parent.name for p in paths] == [
        "layer-00",
        "layer-08",
        "layer-16",
        "layer-24",
        "layer-32",
    ]
    docs = [json.loads(p.read_text("utf-8")) for p in paths]
    layers = [d["extract"]["layer"] for d in docs]
    assert layers == [0, 8, 16, 24, 32]
    for d in docs:
        d["extract"]["layer"] = None
    assert all(d == docs[0] for d in docs)
    embedded = []
    for p in paths:
        manifest = corpus.load_manifest(p)
        embedded.append(corpus.load_utterance(manifest, manifest.items[0], "en"))
    assert all(e.n_frames == 50 for e in embedded)
    assert any(not np.array_equal(embedded[0].frames, e.frames) for e in embedded[1:])


def test_audio_longer_than_window_is_chunked_then_trimmed(make_dataset, tmp_path):
    desc = make_dataset({"u1": {"language": "en", "freq": 90.0, "duration_s": 65.0}})
    job = ExtractionJob(load_dataset(desc), tmp_path / "out")
    (manifest_path,) = extract(job, SyntheticBackend())
    manifest = corpus.load_manifest(manifest_path)
    assert manifest.items[0].utterances["en"].frames == math.ceil(65.0 * 50.0)


def test_incomplete_items_are_dropped_and_counted(make_dataset, tmp_path):
    desc = make_dataset(
        {
            "u1": {"language": "en", "item_id": "s1", "freq": 220.0, "duration_s": 1.0},
            "u2": {"language": "fr", "item_id": "s1", "freq": 220.0, "duration_s": 1.0},
            "u3": {"language": "en", "item_id": "s2", "freq": 330.0, "duration_s": 1.0},
        }
    )
    job = ExtractionJob(load_dataset(desc), tmp_path / "out")
    (manifest_path,) = extract(job, SyntheticBackend())
    manifest = corpus.load_manifest(manifest_path)
    assert [i.item_id for i in manifest.items] == ["s1"]
    assert manifest.extra["extract"]["items_dropped"] == 1
    assert manifest.extra["extract"]["utterances_deduped"] == 0


def test_duplicate_cell_keeps_lexicographically_smallest_utterance(make_dataset, tmp_path):
    desc = make_dataset(
        {
            "zz-dup": {"language": "en", "item_id": "s1", "freq": 220.0, "duration_s": 2.0},
            "aa-keep": {"language": "en", "item_id": "s1", "freq": 220.0, "duration_s": 1.0},
        }
    )
    job = ExtractionJob(load_dataset(desc), tmp_path / "out")
    (manifest_path,) = extract(job, SyntheticBackend())
    manifest = corpus.load_manifest(manifest_path)
    assert manifest.items[0].utterances["en"].frames == 50
    assert manifest.extra["extract"]["utterances_deduped"] == 1


def test_language_selection_restricts_output(make_dataset, tmp_path):
    desc = make_dataset(
        {
            "u1": {"language": "en", "item_id": "s1", "freq": 220.0, "duration_s": 1.0},
            "u2": {"language": "fr", "item_id": "s1", "freq": 220.0, "duration_s": 1.0},
            "u3": {"language": "de", "item_id": "s1", "freq": 220.0, "duration_s": 1.0},
        }
    )
    job = ExtractionJob(load_dataset(desc), tmp_path / "out", languages=["en", "de"])
    (manifest_path,) = extract(job, SyntheticBackend())
    manifest = corpus.load_manifest(manifest_path)
    assert manifest.languages == ("en", "de")
    with pytest.raises(DatasetError, match="no items"):
        extract(
            ExtractionJob(load_dataset(desc), tmp_path / "out2", languages=["en", "xx"]),
            SyntheticBackend(),
        )


def test_emitted_corpus_supports_retrieval(make_dataset, tmp_path):
    entries = {}
    for i, freq in enumerate([220.0, 330.0, 440.0]):
        for lang in ("en", "fr"):
            entries[f"{lang}-{i}"] = {
                "language": lang,
                "item_id": f"s{i}",
                "freq": freq,
                "duration_s": 1.5,
            }
    desc = make_dataset(entries)
    job = ExtractionJob(load_dataset(desc), tmp_path / "out")
    (manifest_path,) = extract(job, SyntheticBackend())
    manifest = corpus.load_manifest(manifest_path)
    report, matrix = pair_report(manifest, "en", "fr", MetricSpec("seqsim"), ks=(1,))
    assert report.n_excluded == 0
    assert report.recall_at[1] == 1.0


def test_layer_outside_encoder_range_is_rejected(make_dataset, tmp_path):
    desc = make_dataset({"u1": {"language": "en", "freq": 220.0, "duration_s": 1.0}})
    job = ExtractionJob(load_dataset(desc), tmp_path / "out", layers=[0, 4])
    with pytest.raises(DatasetError, match="outside the encoder's range"):
        extract(job, SyntheticBackend(n_layers=4))


def test_duration_metadata_longer_than_audio_is_rejected(make_dataset, tmp_path):
    desc = make_dataset(
        {"u1": {"language": "en", "audio": np.zeros(16000), "duration_s": 31.0}}
    )
    job = ExtractionJob(load_dataset(desc), tmp_path / "out")
    with pytest.raises(DatasetError):
        extract(job, SyntheticBackend())


def test_sample_rate_mismatch_is_rejected(make_dataset, tmp_path):
    desc = make_dataset({"u1": {"language": "en", "freq": 220.0, "duration_s": 1.0}})
    job = ExtractionJob(load_dataset(desc), tmp_path / "out")
    backend = SyntheticBackend()
    backend.sample_rate = 22050
    with pytest.raises(DatasetError, match="encoder expects"):
        extract(job, backend)
