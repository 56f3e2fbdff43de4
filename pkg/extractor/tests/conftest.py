import json
import math

import numpy as np
import pytest

from eseq_extract.dataset import write_wav

RATE = 16000


def tone(freq_hz: float, duration_s: float, rate: int = RATE) -> np.ndarray:
    t = np.arange(math.ceil(duration_s * rate)) / rate
    return (0.5 * np.sin(2 * np.pi * freq_hz * t)).astype(np.float64)


@pytest.fixture
def make_dataset(tmp_path):
    """Write WAV files plus a descriptor and return the descriptor path.

    ``entries`` maps utterance id -> dict with keys language, item_id,
    duration_s, and either ``audio`` (samples) or ``freq`` (tone frequency);
    optional ``transcript``.
    """

    def build(entries, name="dataset"):
        root = tmp_path / name
        root.mkdir()
        utts = []
        for utt_id, fields in entries.items():
            samples = fields.get("audio")
            if samples is None:
                samples = tone(fields["freq"], fields["duration_s"])
            wav = f"{utt_id}.wav"
            write_wav(samples, RATE, root / wav)
            entry = {
                "id": utt_id,
                "item_id": fields.get("item_id", utt_id),
                "language": fields["language"],
                "audio": wav,
                "duration_s": fields["duration_s"],
            }
            if "transcript" in fields:
                entry["transcript"] = fields["transcript"]
            utts.append(entry)
        desc = root / "dataset.json"
        desc.write_text(json.dumps({"utterances": utts}), "utf-8")
        return desc

    return build
