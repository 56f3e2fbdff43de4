"""Four similarity measures over row-normalized frame-embedding sequences.

seqsim, dtwsim, and otsim are all driven by one shared kernel, the Gram
matrix of pairwise dot products between unit frames; avgsim compares mean
frame vectors directly. Scores computed from a precomputed Gram matrix are
bit-identical to the from-scratch path because it is the same code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import align
from .corpus import (
    ZERO_NORM,
    EmbeddingSequence,
    ValidationError,
    ZeroNormMean,
)

METRIC_KINDS = ("seqsim", "avgsim", "dtwsim", "otsim")

# Dot products of rows within UNIT_NORM_TOL of unit length stay inside
# [-1, 1] up to about twice that tolerance; anything beyond is garbage input.
GRAM_TOL = 2.5e-6


class DimensionMismatch(ValidationError):
    """Two sequences disagree on embedding dimension."""


class NotNormalized(ValidationError):
    """A metric requiring unit rows received an unnormalized sequence."""


@dataclass(frozen=True)
class MetricSpec:
    """Which similarity measure to run, plus transport solver parameters.

    otsim solves instances with both lengths at most ``ot_exact_threshold``
    exactly; larger ones use entropic regularization ``ot_epsilon`` with the
    Sinkhorn stopping tolerance ``ot_marginal_tol`` and iteration cap
    ``ot_max_iter``.
    """

    kind: str = "seqsim"
    ot_epsilon: float = 0.05
    ot_max_iter: int = 1000
    ot_marginal_tol: float = 1e-9
    ot_exact_threshold: int = 16

    def __post_init__(self):
        if self.kind not in METRIC_KINDS:
            raise ValidationError(
                f"unknown metric {self.kind!r}, expected one of: {', '.join(METRIC_KINDS)}"
            )
        if not (self.ot_epsilon > 0):
            raise ValidationError(f"ot_epsilon must be positive, got {self.ot_epsilon}")
        if self.ot_max_iter < 1:
            raise ValidationError(f"ot_max_iter must be >= 1, got {self.ot_max_iter}")
        if not (self.ot_marginal_tol > 0):
            raise ValidationError(f"ot_marginal_tol must be positive, got {self.ot_marginal_tol}")
        if self.ot_exact_threshold < 0:
            raise ValidationError(
                f"ot_exact_threshold must be >= 0, got {self.ot_exact_threshold}"
            )


def _check_pair(x: EmbeddingSequence, y: EmbeddingSequence) -> None:
    if x.dim != y.dim:
        raise DimensionMismatch(f"dimension mismatch: {x.dim} vs {y.dim}")
    if not (x.normalized and y.normalized):
        raise NotNormalized("both sequences must be row-normalized (see normalize_rows)")


def gram(x: EmbeddingSequence, y: EmbeddingSequence) -> np.ndarray:
    """T_x by T_y matrix of dot products between the unit rows of x and y.

    With unit rows these are cosine similarities; the dot products are
    accumulated in float64 with a fixed summation order, so the result is
    deterministic for given inputs.
    """
    _check_pair(x, y)
    g = x.frames @ y.frames.T
    if float(np.abs(g).max()) > 1.0 + GRAM_TOL:
        raise ValidationError(
            f"gram entry magnitude {float(np.abs(g).max())!r} exceeds 1: rows are not unit length"
        )
    return g


def cost_from_gram(g: np.ndarray) -> np.ndarray:
    """Cosine-distance cost 1 - G, floored at zero against round-off."""
    return np.maximum(1.0 - g, 0.0)


def seqsim_from_gram(g: np.ndarray) -> float:
    """Greedy-matching F1 score from a precomputed Gram matrix.

    Recall is the mean over rows of the row maximum (each frame of x matched
    to its best frame of y), precision the same over columns, and the two
    are combined as 2*p*r/(p+r). When p + r is exactly 0 the score is 0 by
    convention. For p + r < 0, reachable only with strongly anti-aligned
    frames, the formula is evaluated as written and may leave [-1, 1];
    retrieval only needs a consistent ordering, so no clamping is applied.
    """
    re_ = float(np.max(g, axis=1).mean())
    pr = float(np.max(g, axis=0).mean())
    denom = pr + re_
    if denom == 0.0:
        return 0.0
    return 2.0 * pr * re_ / denom


def seqsim(x: EmbeddingSequence, y: EmbeddingSequence) -> float:
    """Greedy frame-matching F1 similarity between two sequences."""
    return seqsim_from_gram(gram(x, y))


def sequence_mean(seq: EmbeddingSequence) -> np.ndarray:
    """Mean frame vector of a sequence (not normalized)."""
    return seq.frames.mean(axis=0)


def avgsim_from_means(mean_x: np.ndarray, mean_y: np.ndarray) -> float:
    """Cosine similarity of two precomputed mean frame vectors."""
    nx = float(np.linalg.norm(mean_x))
    ny = float(np.linalg.norm(mean_y))
    if nx < ZERO_NORM or ny < ZERO_NORM:
        # An all-but-cancelling frame set has no meaningful direction; that is
        # distinct from orthogonality, so no 0 is fabricated here.
        raise ZeroNormMean("mean frame vector has zero norm, cosine undefined")
    return float(mean_x @ mean_y) / (nx * ny)


def avgsim(x: EmbeddingSequence, y: EmbeddingSequence) -> float:
    """Cosine similarity between the mean frame vectors of two sequences."""
    _check_pair(x, y)
    return avgsim_from_means(sequence_mean(x), sequence_mean(y))


def dtwsim_from_gram(g: np.ndarray) -> float:
    """Similarity from the optimal monotone alignment of a Gram matrix.

    The warp cost D over cosine distances is normalized by T_x + T_y, an
    upper bound tied to the path length, giving 1 - D / (T_x + T_y).
    """
    d = align.dtw_cost(cost_from_gram(g))
    m, n = g.shape
    return 1.0 - d / (m + n)


def dtwsim(x: EmbeddingSequence, y: EmbeddingSequence) -> float:
    """Similarity from the optimal monotone frame alignment of two sequences."""
    return dtwsim_from_gram(gram(x, y))


def otsim_from_gram(g: np.ndarray, spec: MetricSpec) -> float:
    """Similarity from optimal transport over a precomputed Gram matrix.

    Frames are weighted uniformly on both sides and the cost carries no
    positional term, so reorderings of either sequence are free. The score
    is 1 minus the (possibly regularized) transport cost.
    """
    cost = cost_from_gram(g)
    m, n = g.shape
    a = np.full(m, 1.0 / m)
    b = np.full(n, 1.0 / n)
    if m <= spec.ot_exact_threshold and n <= spec.ot_exact_threshold:
        plan = align.ot_exact(cost, a, b)
    else:
        plan = align.sinkhorn(
            cost, a, b, spec.ot_epsilon, spec.ot_max_iter, spec.ot_marginal_tol
        )
    return 1.0 - plan.cost


def otsim(x: EmbeddingSequence, y: EmbeddingSequence, spec: MetricSpec | None = None) -> float:
    """Optimal-transport similarity between two sequences."""
    if spec is None:
        spec = MetricSpec(kind="otsim")
    return otsim_from_gram(gram(x, y), spec)


def similarity(x: EmbeddingSequence, y: EmbeddingSequence, spec: MetricSpec) -> float:
    """Dispatch to the measure named by spec.kind."""
    if spec.kind == "seqsim":
        return seqsim(x, y)
    if spec.kind == "avgsim":
        return avgsim(x, y)
    if spec.kind == "dtwsim":
        return dtwsim(x, y)
    return otsim(x, y, spec)
