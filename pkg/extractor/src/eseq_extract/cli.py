"""Command-line frontend: extract embeddings or word spans from a dataset.

Exit codes: 0 success, 1 when the encoder or aligner fails, 2 for invalid
descriptors, audio, or flags.
"""

import argparse
import sys
from pathlib import Path

from . import __version__
from .backend import BackendError, load_backend
from .dataset import DatasetError, load_dataset
from .formats import FormatError
from .jobs import ExtractionJob, extract
from .spans import AlignmentFailure, EvenAligner, extract_word_spans

_ALIGNERS = {"even": EvenAligner}


def _csv_list(raw: str | None) -> tuple[str, ...] | None:
    if raw is None:
        return None
    return tuple(part.strip() for part in raw.split(",") if part.strip())


def cmd_extract(ns: argparse.Namespace) -> int:
    layers = None
    if ns.layers is not None:
        try:
            layers = tuple(int(part) for part in ns.layers.split(","))
        except ValueError:
            raise DatasetError(f"--layers must be comma-separated integers, got {ns.layers!r}")
    job = ExtractionJob(
        utterances=tuple(load_dataset(ns.dataset)),
        out_dir=ns.out_dir,
        model=ns.model,
        layers=layers,
        languages=_csv_list(ns.languages),
    )
    manifests = extract(job)
    for path in manifests:
        print(path)
    return 0


def cmd_spans(ns: argparse.Namespace) -> int:
    aligner = _ALIGNERS[ns.aligner]()
    utterances = load_dataset(ns.dataset)
    out_dir = Path(ns.out_dir)
    for utt in utterances:
        if utt.transcript is None:
            raise DatasetError(f"utterance {utt.utt_id!r} has no transcript")
        target = out_dir / utt.language / f"{utt.utt_id}.spans.json"
        extract_word_spans(utt.audio_path, utt.transcript, aligner, target)
        print(target)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eseq-extract",
        description="Run a speech encoder over audio corpora and emit ESEQ files plus manifests.",
    )
    parser.add_argument("--version", action="version", version=f"eseq-extract {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="embed a dataset into per-layer ESEQ corpora")
    p.add_argument("--dataset", required=True, help="dataset descriptor JSON")
    p.add_argument("--out-dir", required=True, dest="out_dir")
    p.add_argument("--model", default="synthetic", help='"synthetic" or a Whisper checkpoint id')
    p.add_argument("--layers", help="comma-separated encoder layers (default: final)")
    p.add_argument("--languages", help="language subset (default: all in the dataset)")

    p = sub.add_parser("spans", help="word-level span JSON for each utterance")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out-dir", required=True, dest="out_dir")
    p.add_argument("--aligner", choices=sorted(_ALIGNERS), default="even")

    return parser


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    commands = {"extract": cmd_extract, "spans": cmd_spans}
    try:
        return commands[ns.command](ns)
    except (DatasetError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (BackendError, AlignmentFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry_point() -> None:
    sys.exit(main())
