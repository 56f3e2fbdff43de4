"""Command-line frontend for scoring, retrieval, grids, sweeps, and synthesis.

Options resolve in the order: explicit command-line flag, then the command's
table in the TOML config file (--config), then top-level config keys, then
built-in defaults. The worker count additionally honors the SEQSIM_WORKERS
environment variable between config and default. Every output file embeds
the resolved experiment parameters and the tool version; execution-only
knobs (worker count, output paths) are left out so reruns of the same
experiment produce identical files.

Exit codes: 0 success, 1 computation failure, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__, corpus, retrieval, synth
from .corpus import ComputationError, ValidationError
from .metrics import METRIC_KINDS, MetricSpec

WORKERS_ENV = "SEQSIM_WORKERS"

_METRIC_DEFAULTS = {
    "metric": "seqsim",
    "ot_epsilon": 0.05,
    "ot_max_iter": 1000,
    "ot_marginal_tol": 1e-9,
    "ot_exact_threshold": 16,
}


class UsageError(ValidationError):
    """Bad flag/config combination detected after parsing."""


def _tool_block() -> dict:
    return {"name": "seqsim", "version": __version__}


class _Resolver:
    """Layered option lookup: CLI flag, config table, top-level config, default."""

    def __init__(self, ns: argparse.Namespace, command: str):
        self.ns = ns
        config_path = getattr(ns, "config", None)
        if config_path:
            try:
                with open(config_path, "rb") as handle:
                    data = tomllib.load(handle)
            except OSError as exc:
                raise UsageError(f"{config_path}: {exc}") from None
            except tomllib.TOMLDecodeError as exc:
                raise UsageError(f"{config_path}: invalid TOML ({exc})") from None
        else:
            data = {}
        self.shared = {k: v for k, v in data.items() if not isinstance(v, dict)}
        section = data.get(command, {})
        if not isinstance(section, dict):
            raise UsageError(f"config table [{command}] must be a table")
        self.section = section

    def get(self, key: str, default=None):
        value = getattr(self.ns, key, None)
        if value is not None:
            return value
        if key in self.section:
            return self.section[key]
        if key in self.shared:
            return self.shared[key]
        return default


def _metric_spec(res: _Resolver) -> MetricSpec:
    return MetricSpec(
        kind=str(res.get("metric", _METRIC_DEFAULTS["metric"])),
        ot_epsilon=float(res.get("ot_epsilon", _METRIC_DEFAULTS["ot_epsilon"])),
        ot_max_iter=int(res.get("ot_max_iter", _METRIC_DEFAULTS["ot_max_iter"])),
        ot_marginal_tol=float(res.get("ot_marginal_tol", _METRIC_DEFAULTS["ot_marginal_tol"])),
        ot_exact_threshold=int(
            res.get("ot_exact_threshold", _METRIC_DEFAULTS["ot_exact_threshold"])
        ),
    )


def _metric_block(spec: MetricSpec) -> dict:
    return {
        "kind": spec.kind,
        "ot_epsilon": spec.ot_epsilon,
        "ot_max_iter": spec.ot_max_iter,
        "ot_marginal_tol": spec.ot_marginal_tol,
        "ot_exact_threshold": spec.ot_exact_threshold,
    }


def _workers(res: _Resolver) -> int:
    value = res.get("workers")
    if value is None:
        value = os.environ.get(WORKERS_ENV, 1)
    try:
        workers = int(value)
    except (TypeError, ValueError):
        raise UsageError(f"workers must be an integer, got {value!r}") from None
    if workers < 1:
        raise UsageError(f"workers must be >= 1, got {workers}")
    return workers


def _ks(res: _Resolver) -> tuple[int, ...]:
    raw = res.get("ks", "1,5")
    if isinstance(raw, (list, tuple)):
        parts = list(raw)
    else:
        parts = str(raw).split(",")
    try:
        ks = tuple(int(p) for p in parts)
    except ValueError:
        raise UsageError(f"ks must be a comma-separated list of integers, got {raw!r}") from None
    if not ks or any(k < 1 for k in ks):
        raise UsageError(f"ks must be positive integers, got {raw!r}")
    return ks


def _parse_range(raw, flag: str) -> tuple[int, int]:
    if isinstance(raw, (list, tuple)) and len(raw) == 2:
        low, high = raw
    else:
        text = str(raw)
        low, _, high = text.partition(":")
        high = high or low
    try:
        low, high = int(low), int(high)
    except (TypeError, ValueError):
        raise UsageError(f"{flag} must be LOW:HIGH or a single integer, got {raw!r}") from None
    return low, high


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", "utf-8")


def _csv_text(rows) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerows(rows)
    return buffer.getvalue()


def _percent(value: float) -> str:
    return f"{100.0 * value:.1f}%"


def _report_doc(report: retrieval.RetrievalReport, provenance: dict) -> dict:
    return {
        "tool": _tool_block(),
        "config": provenance,
        "query_language": report.query_language,
        "candidate_language": report.candidate_language,
        "metric": _metric_block(report.metric) if report.metric else None,
        "num_queries": report.n_queries,
        "num_candidates": report.n_candidates,
        "excluded_queries": report.n_excluded,
        "recall_at": {str(k): v for k, v in sorted(report.recall_at.items())},
        "per_query": [
            {
                "query_id": q.query_id,
                "correct_id": q.correct_id,
                "rank_of_correct": q.rank_of_correct,
                "top": list(q.top),
                "failed": q.failed,
            }
            for q in report.per_query
        ],
    }


def _report_csv(report: retrieval.RetrievalReport) -> str:
    rows = [("query_id", "top1_id", "rank_of_correct")]
    for q in report.per_query:
        rows.append(
            (
                q.query_id,
                q.top[0] if q.top else "",
                "" if q.rank_of_correct is None else q.rank_of_correct,
            )
        )
    return _csv_text(rows)


def _recall_summary(report: retrieval.RetrievalReport) -> str:
    parts = [f"R@{k} {_percent(v)}" for k, v in sorted(report.recall_at.items())]
    if report.n_excluded:
        parts.append(f"excluded {report.n_excluded}")
    return "  ".join(parts)


def _print_stats(stats: retrieval.ThroughputStats | None) -> None:
    if stats is None:
        return
    print(
        f"pairs {stats.n_pairs}  elapsed {stats.elapsed_s:.2f}s  "
        f"pairs/sec {stats.pairs_per_sec:.1f}  gram-flop {stats.gram_flop}"
    )


def cmd_score(ns: argparse.Namespace) -> int:
    res = _Resolver(ns, "score")
    spec = _metric_spec(res)
    x = corpus.normalize_rows(corpus.load_sequence(ns.file_x))
    y = corpus.normalize_rows(corpus.load_sequence(ns.file_y))
    from .metrics import similarity

    value = similarity(x, y, spec)
    print(f"{spec.kind} {value:.6f}")
    return 0


def cmd_retrieve(ns: argparse.Namespace) -> int:
    res = _Resolver(ns, "retrieve")
    spec = _metric_spec(res)
    workers = _workers(res)
    ks = _ks(res)
    permissive = bool(res.get("permissive", False))
    query_language = res.get("query_lang")
    candidate_language = res.get("cand_lang")
    if not query_language or not candidate_language:
        raise UsageError("--query-lang and --cand-lang are required")
    manifest = corpus.load_manifest(ns.manifest)
    report, matrix = retrieval.pair_report(
        manifest,
        query_language,
        candidate_language,
        spec,
        workers=workers,
        ks=ks,
        permissive=permissive,
    )
    print(f"{query_language}->{candidate_language}  {_recall_summary(report)}")
    _print_stats(matrix.stats)
    out = res.get("out")
    if out:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        provenance = {
            "command": "retrieve",
            "manifest": str(ns.manifest),
            "query_lang": query_language,
            "cand_lang": candidate_language,
            "metric": _metric_block(spec),
            "ks": list(ks),
            "permissive": permissive,
        }
        _write_json(out / "report.json", _report_doc(report, provenance))
        (out / "report.csv").write_text(_report_csv(report), "utf-8")
    return 0


def _grid_markdown(languages, reports) -> str:
    header = "| query \\ candidate | " + " | ".join(languages) + " |"
    divider = "| --- |" + " --- |" * len(languages)
    lines = [header, divider]
    for qa in languages:
        cells = []
        for cb in languages:
            if qa == cb:
                cells.append("-")
            else:
                cells.append(f"{100.0 * reports[(qa, cb)].recall_at[1]:.1f}")
        lines.append("| " + qa + " | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def cmd_grid(ns: argparse.Namespace) -> int:
    res = _Resolver(ns, "grid")
    spec = _metric_spec(res)
    workers = _workers(res)
    ks = _ks(res)
    permissive = bool(res.get("permissive", False))
    manifest = corpus.load_manifest(ns.manifest)
    langs_raw = res.get("langs")
    if langs_raw:
        languages = (
            [str(l) for l in langs_raw]
            if isinstance(langs_raw, (list, tuple))
            else [p.strip() for p in str(langs_raw).split(",") if p.strip()]
        )
    else:
        languages = list(manifest.languages)
    reports = retrieval.grid(
        manifest, languages, spec, workers=workers, ks=ks, permissive=permissive
    )
    markdown = _grid_markdown(languages, reports)
    print(markdown, end="")
    out = res.get("out")
    if out:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        provenance = {
            "command": "grid",
            "manifest": str(ns.manifest),
            "langs": languages,
            "metric": _metric_block(spec),
            "ks": list(ks),
            "permissive": permissive,
        }
        rows = [("query_lang", "candidate_lang", "r_at_1")]
        cells = []
        for (qa, cb), report in reports.items():
            rows.append((qa, cb, repr(report.recall_at[1])))
            cells.append(
                {
                    "query_lang": qa,
                    "candidate_lang": cb,
                    "recall_at": {str(k): v for k, v in sorted(report.recall_at.items())},
                    "num_queries": report.n_queries,
                    "excluded_queries": report.n_excluded,
                }
            )
        (out / "grid.md").write_text(markdown, "utf-8")
        (out / "grid.csv").write_text(_csv_text(rows), "utf-8")
        _write_json(out / "grid.json", {"tool": _tool_block(), "config": provenance, "cells": cells})
    return 0


def cmd_wordsim(ns: argparse.Namespace) -> int:
    res = _Resolver(ns, "wordsim")
    rate = float(res.get("frame_rate", corpus.DEFAULT_FRAME_RATE_HZ))
    seq_x = corpus.load_sequence(ns.file_x)
    spans_x = corpus.load_word_spans(ns.spans_x)
    seq_y = corpus.load_sequence(ns.file_y)
    spans_y = corpus.load_word_spans(ns.spans_y)
    words_x = corpus.word_embeddings(seq_x, spans_x, rate)
    words_y = corpus.word_embeddings(seq_y, spans_y, rate)
    rows = [("word", *(w for w, _ in words_y))]
    for word_x, vec_x in words_x:
        rows.append((word_x, *(repr(float(vec_x @ vec_y)) for _, vec_y in words_y)))
    text = _csv_text(rows)
    out = res.get("out")
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, "utf-8")
    else:
        print(text, end="")
    return 0


def cmd_sweep(ns: argparse.Namespace) -> int:
    res = _Resolver(ns, "sweep")
    spec = _metric_spec(res)
    workers = _workers(res)
    query_language = res.get("query_lang")
    candidate_language = res.get("cand_lang")
    if not query_language or not candidate_language:
        raise UsageError("--query-lang and --cand-lang are required")
    raw_entries = ns.manifest or res.get("manifests") or []
    labeled: list[tuple[str, str]] = []
    for raw in raw_entries:
        label, sep, path = str(raw).partition("=")
        if not sep or not label or not path:
            raise UsageError(f"manifest entry must look like LABEL=PATH, got {raw!r}")
        labeled.append((label, path))
    if not labeled:
        raise UsageError("at least one --manifest LABEL=PATH is required")
    results = retrieval.sweep(
        labeled, query_language, candidate_language, spec, workers=workers
    )
    for result in results:
        if result.error is None:
            print(f"{result.label} {_percent(result.r_at_1)}")
        else:
            print(f"{result.label} FAILED: {result.error}")
    out = res.get("out")
    if out:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        provenance = {
            "command": "sweep",
            "manifests": [f"{label}={path}" for label, path in labeled],
            "query_lang": query_language,
            "cand_lang": candidate_language,
            "metric": _metric_block(spec),
        }
        rows = [("label", "r_at_1", "error")]
        entries = []
        for result in results:
            rows.append(
                (
                    result.label,
                    "" if result.r_at_1 is None else repr(result.r_at_1),
                    result.error or "",
                )
            )
            entries.append(
                {"label": result.label, "r_at_1": result.r_at_1, "error": result.error}
            )
        (out / "sweep.csv").write_text(_csv_text(rows), "utf-8")
        _write_json(
            out / "sweep.json",
            {"tool": _tool_block(), "config": provenance, "results": entries},
        )
    return 0


def cmd_synth(ns: argparse.Namespace) -> int:
    res = _Resolver(ns, "synth")
    seed = res.get("seed")
    if seed is None:
        raise UsageError("--seed is required for reproducible corpora")
    config = synth.SynthConfig(
        n_items=int(res.get("n_items", 100)),
        d=int(res.get("dim", 64)),
        words_per_item=_parse_range(res.get("words", "3:8"), "--words"),
        frames_per_word=_parse_range(res.get("frames", "2:6"), "--frames"),
        noise_sigma=float(res.get("sigma", 0.3)),
        shuffle_word_order=bool(res.get("shuffle", True)),
        n_languages=int(res.get("languages", 2)),
        seed=int(seed),
        frame_rate_hz=float(res.get("frame_rate", corpus.DEFAULT_FRAME_RATE_HZ)),
    )
    out_dir = res.get("out_dir")
    if not out_dir:
        raise UsageError("--out-dir is required")
    manifest = synth.generate(config, out_dir)
    print(
        f"wrote {config.n_items} items x {config.n_languages} languages "
        f"({', '.join(manifest.languages)}) to {out_dir}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seqsim",
        description="Similarity scoring and cross-lingual retrieval over frame-embedding sequences.",
    )
    parser.add_argument("--version", action="version", version=f"seqsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument("--config", help="TOML config file; flags override its values")

    def add_metric(p):
        p.add_argument("--metric", choices=METRIC_KINDS, help="similarity measure (default seqsim)")
        p.add_argument("--ot-epsilon", type=float, dest="ot_epsilon")
        p.add_argument("--ot-max-iter", type=int, dest="ot_max_iter")
        p.add_argument("--ot-marginal-tol", type=float, dest="ot_marginal_tol")
        p.add_argument("--ot-exact-threshold", type=int, dest="ot_exact_threshold")

    p = sub.add_parser("score", help="similarity between two embedding files")
    p.add_argument("file_x")
    p.add_argument("file_y")
    add_metric(p)
    add_config(p)

    p = sub.add_parser("retrieve", help="cross-lingual retrieval for one language pair")
    p.add_argument("manifest")
    p.add_argument("--query-lang", dest="query_lang")
    p.add_argument("--cand-lang", dest="cand_lang")
    p.add_argument("--workers", type=int)
    p.add_argument("--ks", help="comma-separated recall cutoffs (default 1,5)")
    p.add_argument("--permissive", action=argparse.BooleanOptionalAction)
    p.add_argument("--out", help="directory for report.json and report.csv")
    add_metric(p)
    add_config(p)

    p = sub.add_parser("grid", help="retrieval grid over every ordered language pair")
    p.add_argument("manifest")
    p.add_argument("--langs", help="comma-separated language subset (default: all)")
    p.add_argument("--workers", type=int)
    p.add_argument("--ks")
    p.add_argument("--permissive", action=argparse.BooleanOptionalAction)
    p.add_argument("--out", help="directory for grid.md, grid.csv, grid.json")
    add_metric(p)
    add_config(p)

    p = sub.add_parser("wordsim", help="word-by-word cosine matrix from span files")
    p.add_argument("file_x")
    p.add_argument("spans_x")
    p.add_argument("file_y")
    p.add_argument("spans_y")
    p.add_argument("--frame-rate", type=float, dest="frame_rate")
    p.add_argument("--out", help="CSV output path (default: stdout)")
    add_config(p)

    p = sub.add_parser("sweep", help="R@1 across labeled manifests (layers, model sizes)")
    p.add_argument("--manifest", action="append", metavar="LABEL=PATH")
    p.add_argument("--query-lang", dest="query_lang")
    p.add_argument("--cand-lang", dest="cand_lang")
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="directory for sweep.csv and sweep.json")
    add_metric(p)
    add_config(p)

    p = sub.add_parser("synth", help="generate a synthetic parallel corpus")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-items", type=int, dest="n_items")
    p.add_argument("--dim", type=int)
    p.add_argument("--words", help="words per item, LOW:HIGH")
    p.add_argument("--frames", help="frames per word, LOW:HIGH")
    p.add_argument("--sigma", type=float)
    p.add_argument("--shuffle", action=argparse.BooleanOptionalAction)
    p.add_argument("--languages", type=int)
    p.add_argument("--frame-rate", type=float, dest="frame_rate")
    add_config(p)

    return parser


_COMMANDS = {
    "score": cmd_score,
    "retrieve": cmd_retrieve,
    "grid": cmd_grid,
    "wordsim": cmd_wordsim,
    "sweep": cmd_sweep,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        return _COMMANDS[ns.command](ns)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ComputationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry_point() -> None:
    sys.exit(main())
