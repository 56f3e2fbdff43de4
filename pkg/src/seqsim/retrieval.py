"""Batch scoring engine, argmax retrieval, language grids, and sweeps.

score_all computes a full query-by-candidate score matrix with worker
threads partitioned over query rows. Every pair is scored independently with
a fixed within-pair arithmetic order, so results are bit-identical for any
worker count. retrieve ranks candidates per query with a deterministic
tie-break and aggregates recall at the requested cutoffs.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import corpus, metrics
from .corpus import (
    ComputationError,
    CorpusManifest,
    EmbeddingSequence,
    ManifestError,
    ValidationError,
)
from .metrics import MetricSpec


class ScoringError(ComputationError):
    """A metric failed on one (query, candidate) pair; names the pair."""


@dataclass(frozen=True)
class PairFailure:
    """Record of one failed pair in permissive scoring mode."""

    query_id: str
    candidate_id: str
    error: str


@dataclass(frozen=True)
class ThroughputStats:
    """Benchmark accounting for one score_all run.

    gram_flop counts 2 * T_x * T_y * d multiply-adds per pair, the cost of
    the shared Gram kernel, regardless of which metric consumed it.
    """

    n_pairs: int
    elapsed_s: float
    pairs_per_sec: float
    gram_flop: int


@dataclass(frozen=True)
class ScoreMatrix:
    """|Q| x |R| similarity scores for one (query lang, candidate lang, metric).

    NaN entries mark pairs recorded in ``failures`` (permissive mode only);
    all other entries are finite. ``stats`` carries throughput accounting and
    is never part of any serialized report.
    """

    query_ids: tuple[str, ...]
    candidate_ids: tuple[str, ...]
    scores: np.ndarray
    metric: MetricSpec | None
    query_language: str
    candidate_language: str
    failures: tuple[PairFailure, ...] = ()
    stats: ThroughputStats | None = None

    def __post_init__(self):
        scores = np.ascontiguousarray(self.scores, dtype=np.float64)
        if scores.shape != (len(self.query_ids), len(self.candidate_ids)):
            raise ValidationError(
                f"score matrix shape {scores.shape} does not match "
                f"{len(self.query_ids)} queries x {len(self.candidate_ids)} candidates"
            )
        if len(set(self.query_ids)) != len(self.query_ids):
            raise ValidationError("duplicate query ids")
        if len(set(self.candidate_ids)) != len(self.candidate_ids):
            raise ValidationError("duplicate candidate ids")
        n_bad = int(np.isnan(scores).sum())
        if n_bad != len(self.failures) or not np.isfinite(scores[~np.isnan(scores)]).all():
            raise ValidationError(
                f"scores must be finite except for {len(self.failures)} recorded failures, "
                f"found {n_bad} NaN and/or infinite entries"
            )
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)


@dataclass(frozen=True)
class QueryResult:
    """Per-query ranking outcome; failed queries carry no ranking."""

    query_id: str
    correct_id: str
    rank_of_correct: int | None
    top: tuple[str, ...]
    failed: bool = False


@dataclass(frozen=True)
class RetrievalReport:
    """Aggregated retrieval outcome for one language direction.

    recall_at maps each requested cutoff k to hits / (queries - excluded);
    excluded queries are those with recorded scoring failures.
    """

    query_language: str
    candidate_language: str
    metric: MetricSpec | None
    recall_at: Mapping[int, float]
    per_query: tuple[QueryResult, ...]
    n_queries: int
    n_candidates: int
    n_excluded: int

    @property
    def direction(self) -> tuple[str, str]:
        return (self.query_language, self.candidate_language)


def _common_language(seqs: Sequence[EmbeddingSequence]) -> str:
    langs = {s.language for s in seqs}
    return langs.pop() if len(langs) == 1 else ""


def _pair_scorer(spec: MetricSpec, queries, candidates):
    """Per-pair scoring closure; precomputes per-utterance state where safe.

    The avgsim path precomputes each utterance's mean frame vector once and
    runs the identical cosine arithmetic per pair, so its scores match
    metrics.avgsim bit for bit.
    """
    if spec.kind == "avgsim":
        query_means = [metrics.sequence_mean(q) for q in queries]
        cand_means = [metrics.sequence_mean(c) for c in candidates]

        def score(qi: int, ci: int) -> float:
            return metrics.avgsim_from_means(query_means[qi], cand_means[ci])

    else:

        def score(qi: int, ci: int) -> float:
            return metrics.similarity(queries[qi], candidates[ci], spec)

    return score


def score_all(
    queries: Sequence[EmbeddingSequence],
    candidates: Sequence[EmbeddingSequence],
    spec: MetricSpec,
    workers: int = 1,
    permissive: bool = False,
) -> ScoreMatrix:
    """Score every query against every candidate.

    Args:
      workers: thread count; any value >= 1 produces bit-identical scores
        because pairs are independent and written to disjoint cells.
      permissive: record per-pair computation failures as NaN instead of
        aborting; retrieve() later excludes affected queries.

    Raises:
      ScoringError: a pair failed and permissive is off; the message names
        the (query_id, candidate_id) pair.
    """
    if not queries or not candidates:
        raise ValidationError("queries and candidates must both be non-empty")
    if workers < 1:
        raise ValidationError(f"workers must be >= 1, got {workers}")
    dims = sorted({s.dim for s in (*queries, *candidates)})
    if len(dims) != 1:
        raise metrics.DimensionMismatch(f"sequences disagree on dimension: {dims}")
    for s in (*queries, *candidates):
        if not s.normalized:
            raise metrics.NotNormalized(
                f"sequence {s.item_id!r} ({s.language}) is not row-normalized"
            )
    n_q, n_r = len(queries), len(candidates)
    scores = np.empty((n_q, n_r))
    row_failures: list[list[PairFailure]] = [[] for _ in range(n_q)]
    score_pair = _pair_scorer(spec, queries, candidates)

    def run_row(qi: int) -> None:
        failures = row_failures[qi]
        for ci in range(n_r):
            try:
                scores[qi, ci] = score_pair(qi, ci)
            except ComputationError as exc:
                if not permissive:
                    raise ScoringError(
                        f"scoring pair ({queries[qi].item_id!r}, "
                        f"{candidates[ci].item_id!r}) failed: {exc}"
                    ) from exc
                scores[qi, ci] = np.nan
                failures.append(
                    PairFailure(queries[qi].item_id, candidates[ci].item_id, str(exc))
                )

    start = time.perf_counter()
    if workers == 1:
        for qi in range(n_q):
            run_row(qi)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for future in [pool.submit(run_row, qi) for qi in range(n_q)]:
                future.result()
    elapsed = time.perf_counter() - start
    d = dims[0]
    gram_flop = 2 * d * sum(q.n_frames for q in queries) * sum(c.n_frames for c in candidates)
    stats = ThroughputStats(
        n_pairs=n_q * n_r,
        elapsed_s=elapsed,
        pairs_per_sec=(n_q * n_r) / elapsed if elapsed > 0 else float("inf"),
        gram_flop=gram_flop,
    )
    return ScoreMatrix(
        query_ids=tuple(q.item_id for q in queries),
        candidate_ids=tuple(c.item_id for c in candidates),
        scores=scores,
        metric=spec,
        query_language=_common_language(queries),
        candidate_language=_common_language(candidates),
        failures=tuple(f for row in row_failures for f in row),
        stats=stats,
    )


def retrieve(
    matrix: ScoreMatrix, truth: Mapping[str, str], ks: Sequence[int] = (1, 5)
) -> RetrievalReport:
    """Rank candidates per query and aggregate recall at each cutoff.

    Candidates are ordered by descending score with exact ties broken by
    ascending candidate index, so rankings are deterministic. Queries with
    recorded scoring failures are excluded from every recall denominator.
    """
    if not ks:
        raise ValidationError("ks must name at least one cutoff")
    n_r = len(matrix.candidate_ids)
    for k in ks:
        if not isinstance(k, (int, np.integer)) or k < 1 or k > n_r:
            raise ValidationError(f"cutoff k={k!r} outside [1, {n_r}]")
    cand_index = {cid: i for i, cid in enumerate(matrix.candidate_ids)}
    for qid in matrix.query_ids:
        if qid not in truth:
            raise ValidationError(f"query {qid!r} missing from the truth mapping")
        if truth[qid] not in cand_index:
            raise ValidationError(
                f"correct candidate {truth[qid]!r} for query {qid!r} not among candidates"
            )
    failed_queries = {f.query_id for f in matrix.failures}
    k_max = max(ks)
    # Stable sort on negated scores: descending score, ascending index on ties.
    order = np.argsort(-matrix.scores, axis=1, kind="stable")
    hits = {int(k): 0 for k in ks}
    per_query = []
    n_valid = 0
    for qi, qid in enumerate(matrix.query_ids):
        correct = truth[qid]
        if qid in failed_queries:
            per_query.append(QueryResult(qid, correct, None, (), failed=True))
            continue
        n_valid += 1
        row = order[qi]
        rank = int(np.nonzero(row == cand_index[correct])[0][0]) + 1
        top = tuple(matrix.candidate_ids[r] for r in row[:k_max])
        per_query.append(QueryResult(qid, correct, rank, top))
        for k in hits:
            if rank <= k:
                hits[k] += 1
    if n_valid == 0:
        raise ComputationError("every query was excluded by scoring failures")
    recall_at = {k: hits[k] / n_valid for k in hits}
    return RetrievalReport(
        query_language=matrix.query_language,
        candidate_language=matrix.candidate_language,
        metric=matrix.metric,
        recall_at=recall_at,
        per_query=tuple(per_query),
        n_queries=len(matrix.query_ids),
        n_candidates=n_r,
        n_excluded=len(matrix.query_ids) - n_valid,
    )


def _load_language_map(
    manifest: CorpusManifest, language: str
) -> dict[str, EmbeddingSequence]:
    seqs = corpus.sequences_for_language(manifest, language)
    return {s.item_id: corpus.normalize_rows(s) for s in seqs}


def _aligned_pair(
    manifest: CorpusManifest,
    by_lang: Mapping[str, Mapping[str, EmbeddingSequence]],
    query_language: str,
    candidate_language: str,
):
    common = [
        item.item_id
        for item in manifest.items
        if query_language in item.utterances and candidate_language in item.utterances
    ]
    if not common:
        raise ManifestError(
            f"no items shared between {query_language!r} and {candidate_language!r}"
        )
    queries = [by_lang[query_language][i] for i in common]
    candidates = [by_lang[candidate_language][i] for i in common]
    truth = {i: i for i in common}
    return queries, candidates, truth


def pair_report(
    manifest: CorpusManifest,
    query_language: str,
    candidate_language: str,
    spec: MetricSpec,
    workers: int = 1,
    ks: Sequence[int] = (1, 5),
    permissive: bool = False,
) -> tuple[RetrievalReport, ScoreMatrix]:
    """Retrieval for one ordered language pair of a manifest."""
    by_lang = {
        lang: _load_language_map(manifest, lang)
        for lang in dict.fromkeys((query_language, candidate_language))
    }
    queries, candidates, truth = _aligned_pair(
        manifest, by_lang, query_language, candidate_language
    )
    matrix = score_all(queries, candidates, spec, workers=workers, permissive=permissive)
    return retrieve(matrix, truth, ks), matrix


def grid(
    manifest: CorpusManifest,
    languages: Sequence[str],
    spec: MetricSpec,
    workers: int = 1,
    ks: Sequence[int] = (1, 5),
    permissive: bool = False,
) -> dict[tuple[str, str], RetrievalReport]:
    """Retrieval over every ordered pair of the requested languages.

    Queries and candidates for a pair (A, B) are the items present in both
    languages, with the same item id as ground truth; the diagonal A == B is
    skipped. Each language is loaded once and shared across pairs.
    """
    languages = list(languages)
    if len(languages) < 2:
        raise ValidationError("a grid needs at least two languages")
    if len(set(languages)) != len(languages):
        raise ValidationError("duplicate languages requested")
    by_lang = {lang: _load_language_map(manifest, lang) for lang in languages}
    out: dict[tuple[str, str], RetrievalReport] = {}
    for query_language in languages:
        for candidate_language in languages:
            if query_language == candidate_language:
                continue
            queries, candidates, truth = _aligned_pair(
                manifest, by_lang, query_language, candidate_language
            )
            matrix = score_all(
                queries, candidates, spec, workers=workers, permissive=permissive
            )
            out[(query_language, candidate_language)] = retrieve(matrix, truth, ks)
    return out


@dataclass(frozen=True)
class SweepResult:
    """R@1 for one labeled manifest, or the failure that prevented it."""

    label: str
    r_at_1: float | None
    error: str | None = None


def sweep(
    labeled_manifests: Sequence[tuple[str, CorpusManifest | str | Path]],
    query_language: str,
    candidate_language: str,
    spec: MetricSpec,
    workers: int = 1,
) -> list[SweepResult]:
    """R@1 per labeled manifest (e.g. encoder layer or model size), in order.

    Entries may be loaded manifests or manifest paths. A failing entry is
    recorded with its error and the sweep continues.
    """
    results = []
    for label, entry in labeled_manifests:
        try:
            manifest = (
                entry
                if isinstance(entry, CorpusManifest)
                else corpus.load_manifest(entry)
            )
            report, _ = pair_report(
                manifest,
                query_language,
                candidate_language,
                spec,
                workers=workers,
                ks=(1,),
            )
            results.append(SweepResult(label=label, r_at_1=report.recall_at[1]))
        except Exception as exc:  # record per-manifest failures, keep sweeping
            results.append(
                SweepResult(label=label, r_at_1=None, error=f"{type(exc).__name__}: {exc}")
            )
    return results
