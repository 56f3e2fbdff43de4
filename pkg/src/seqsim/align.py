"""Alignment solvers: exact DTW with path recovery and optimal transport.

DTW runs the classic O(m*n) dynamic program over the three steps down,
right, and diagonal. Transport problems are solved exactly as a small linear
program, or approximately by log-domain entropic scaling (Sinkhorn) when the
instances are too large for the LP to be worthwhile.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse
from scipy.optimize import linprog

from .corpus import ComputationError, ValidationError

# Marginal vectors must each sum to 1 within this tolerance.
MARGINAL_SUM_TOL = 1e-12
# The exact solver must satisfy its marginals at least this well.
EXACT_MARGINAL_TOL = 1e-9
# Sinkhorn warm start: a few scaling sweeps at geometrically decreasing
# epsilon values walk the potentials near the target solution cheaply.
_ANNEAL_FROM = 1.0
_ANNEAL_RATIO = 0.5
_ANNEAL_STEPS = 5
# Plain alternating scaling contracts geometrically but the ratio can sit
# arbitrarily close to 1 for small epsilon; once per block of scaling
# iterations a Newton step on the dual potentials skips that tail.
_NEWTON_BLOCK = 40


class NonConvergence(ComputationError):
    """Sinkhorn hit its iteration cap before reaching the marginal tolerance.

    Carries the last iterate in ``plan`` (a TransportPlan with the achieved
    violation and iteration count) so callers can decide to accept it.
    """

    def __init__(self, message: str, plan: "TransportPlan | None" = None):
        super().__init__(message)
        self.plan = plan


@dataclass(frozen=True)
class WarpPath:
    """Monotone alignment path through a cost grid.

    ``steps`` are 1-based (i, j) pairs from (1, 1) to (m, n); consecutive
    pairs differ by (1, 0), (0, 1), or (1, 1). ``cost`` is the summed cost
    of all visited cells.
    """

    steps: tuple[tuple[int, int], ...]
    cost: float


@dataclass(frozen=True)
class TransportPlan:
    """Coupling matrix with its transport cost and achieved marginal accuracy."""

    plan: np.ndarray
    cost: float
    marginal_violation: float
    iterations: int


def _as_cost(cost) -> np.ndarray:
    c = np.ascontiguousarray(cost, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] < 1 or c.shape[1] < 1:
        raise ValidationError(f"cost must be a non-empty 2-D matrix, got shape {c.shape}")
    if not np.isfinite(c).all():
        raise ValidationError("cost matrix contains non-finite values")
    return c


def _as_marginal(vec, length: int, name: str) -> np.ndarray:
    v = np.ascontiguousarray(vec, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != length:
        raise ValidationError(f"marginal {name} must have length {length}, got shape {v.shape}")
    if not np.isfinite(v).all() or (v < 0).any():
        raise ValidationError(f"marginal {name} must be finite and nonnegative")
    total = float(v.sum())
    if abs(total - 1.0) > MARGINAL_SUM_TOL:
        raise ValidationError(f"infeasible marginals: {name} sums to {total!r}, expected 1")
    return v


def _violation(plan: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    row = np.abs(plan.sum(axis=1) - a).max()
    col = np.abs(plan.sum(axis=0) - b).max()
    return float(max(row, col))


def _dtw_table(c: np.ndarray) -> np.ndarray:
    """Accumulated-cost table D[i, j] = c[i, j] + min of the three predecessors.

    Filled along anti-diagonals so the inner work is vectorized; every cell
    sees exactly the same per-cell arithmetic as a scalar loop would, so the
    table is bit-identical to one filled cell by cell.
    """
    m, n = c.shape
    d = np.empty((m, n))
    d[:, 0] = np.cumsum(c[:, 0])
    d[0, :] = np.cumsum(c[0, :])
    for k in range(2, m + n - 1):
        lo = max(1, k - n + 1)
        hi = min(m - 1, k - 1)
        if lo > hi:
            continue
        i = np.arange(lo, hi + 1)
        j = k - i
        best = np.minimum(d[i - 1, j - 1], np.minimum(d[i - 1, j], d[i, j - 1]))
        d[i, j] = c[i, j] + best
    return d


def dtw(cost) -> WarpPath:
    """Globally minimal monotone warp of a cost grid, with the path recovered.

    Cost ties between predecessors are broken deterministically: diagonal
    first, then vertical (advance i), then horizontal (advance j), so the
    recovered path is identical across runs and platforms.
    """
    c = _as_cost(cost)
    m, n = c.shape
    d = _dtw_table(c)
    i, j = m - 1, n - 1
    rev = [(i, j)]
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            cands = ((i - 1, j - 1), (i - 1, j), (i, j - 1))
        elif i > 0:
            cands = ((i - 1, j),)
        else:
            cands = ((i, j - 1),)
        best = min(d[p] for p in cands)
        for p in cands:
            if d[p] == best:
                i, j = p
                break
        rev.append((i, j))
    steps = tuple((pi + 1, pj + 1) for pi, pj in reversed(rev))
    return WarpPath(steps=steps, cost=float(d[m - 1, n - 1]))


def dtw_cost(cost) -> float:
    """Total cost of the optimal warp, skipping path recovery."""
    c = _as_cost(cost)
    return float(_dtw_table(c)[-1, -1])


def ot_exact(cost, a, b) -> TransportPlan:
    """Exact solution of the transportation linear program.

    Intended for small instances (the LP has m*n variables); production-size
    problems route through sinkhorn instead. The returned plan satisfies its
    marginals within EXACT_MARGINAL_TOL.
    """
    c = _as_cost(cost)
    m, n = c.shape
    a = _as_marginal(a, m, "a")
    b = _as_marginal(b, n, "b")
    if abs(float(a.sum()) - float(b.sum())) > MARGINAL_SUM_TOL:
        raise ValidationError(
            f"infeasible marginals: sums {float(a.sum())!r} and {float(b.sum())!r} differ"
        )
    # One equality row per source marginal and one per target marginal; the
    # system is rank-deficient by one, which the LP solver handles.
    var = np.arange(m * n)
    row_idx = np.concatenate([var // n, m + var % n])
    col_idx = np.concatenate([var, var])
    a_eq = scipy.sparse.coo_matrix(
        (np.ones(2 * m * n), (row_idx, col_idx)), shape=(m + n, m * n)
    ).tocsr()
    res = linprog(
        c.ravel(),
        A_eq=a_eq,
        b_eq=np.concatenate([a, b]),
        bounds=(0, None),
        method="highs",
    )
    if not res.success:
        raise ComputationError(f"transport LP failed: {res.message}")
    plan = np.maximum(res.x.reshape(m, n), 0.0)
    violation = _violation(plan, a, b)
    if violation > EXACT_MARGINAL_TOL:
        raise ComputationError(
            f"transport LP marginal violation {violation:.3e} exceeds {EXACT_MARGINAL_TOL:.1e}"
        )
    return TransportPlan(
        plan=plan,
        cost=float(np.sum(plan * c)),
        marginal_violation=violation,
        iterations=0,
    )


def _lse_rows(x: np.ndarray) -> np.ndarray:
    """logsumexp over axis 1, stable for arbitrarily negative entries."""
    hi = x.max(axis=1)
    return np.log(np.exp(x - hi[:, None]).sum(axis=1)) + hi


def _lse_cols(x: np.ndarray) -> np.ndarray:
    """logsumexp over axis 0."""
    hi = x.max(axis=0)
    return np.log(np.exp(x - hi[None, :]).sum(axis=0)) + hi


def _dual_value(k, a, b, phi, psi) -> float:
    with np.errstate(over="ignore"):
        return float(
            np.exp(phi[:, None] + k + psi[None, :]).sum()
            - np.dot(a, phi)
            - np.dot(b, psi)
        )


def _newton_polish(k, a, b, phi, psi):
    """One damped Newton step on the dual potentials.

    The dual objective sum(P) - a . phi - b . psi with
    P = exp(phi_i + k_ij + psi_j) is smooth and convex, and its gradient is
    exactly the marginal mismatch, so one step near the fixed point gains
    many digits where plain scaling can crawl. The potentials are determined
    only up to an additive shift, so the last coordinate is pinned.

    The Hessian is damped rather than truncated because near-decomposable
    instances hinge on eigenvalues of order exp(-gap/epsilon): a rank cutoff
    would delete exactly the direction that moves mass between the blocks.
    Curvature that small also makes the quadratic model's step length
    meaningless, so the line search may expand the step geometrically as
    well as shrink it, and the 1-D restriction being convex keeps that
    search well behaved. A worse trial point is never accepted, so the step
    can only help.
    """
    m, n = phi.size, psi.size
    p = np.exp(phi[:, None] + k + psi[None, :])
    r = p.sum(axis=1)
    s = p.sum(axis=0)
    h = np.zeros((m + n, m + n))
    h[:m, :m] = np.diag(r)
    h[:m, m:] = p
    h[m:, :m] = p.T
    h[m:, m:] = np.diag(s)
    rhs = np.concatenate([a - r, b - s])
    hh = h[:-1, :-1]
    hh[np.diag_indices_from(hh)] += 1e-10 * max(float(r.max()), float(s.max()))
    try:
        step = np.linalg.solve(hh, rhs[:-1])
    except np.linalg.LinAlgError:
        step, *_ = np.linalg.lstsq(hh, rhs[:-1], rcond=None)
    du = step[:m]
    dv = np.concatenate([step[m:], [0.0]])
    base = _dual_value(k, a, b, phi, psi)
    t = 1.0
    val = _dual_value(k, a, b, phi + du, psi + dv)
    if np.isfinite(val) and val < base:
        for _ in range(60):
            wide = _dual_value(k, a, b, phi + 2 * t * du, psi + 2 * t * dv)
            if not (np.isfinite(wide) and wide < val):
                break
            t *= 2.0
            val = wide
        return phi + t * du, psi + t * dv
    for _ in range(60):
        t *= 0.5
        val = _dual_value(k, a, b, phi + t * du, psi + t * dv)
        if np.isfinite(val) and val < base:
            return phi + t * du, psi + t * dv
    return phi, psi


def sinkhorn(cost, a, b, epsilon: float, max_iter: int = 1000, tol: float = 1e-9) -> TransportPlan:
    """Entropically regularized transport by log-domain alternating scaling.

    The plan has the form diag(u) * exp(-cost / epsilon) * diag(v); both
    scaling updates are carried out on log-potentials, so arbitrarily small
    epsilon cannot overflow. One iteration updates both potentials; after the
    column update the column marginals hold by construction, so convergence
    is checked on the row marginals of the scaled plan.

    Two accelerations keep small-epsilon instances practical without
    changing the plan form or the stopping rule: a warm start that runs a
    few scaling sweeps at geometrically decreasing epsilon values before
    the target one, and a periodic damped Newton step on the potentials.
    Both warm-start and target-epsilon sweeps count toward ``iterations``;
    Newton steps do not, as they are not scaling updates.

    Args:
      epsilon: regularization strength; the plan approaches the exact
        optimum as it shrinks.
      max_iter: cap on scaling iterations.
      tol: maximum absolute marginal violation accepted as converged.

    Raises:
      NonConvergence: the cap was reached first; the exception carries the
        last iterate.
    """
    c = _as_cost(cost)
    m, n = c.shape
    a = _as_marginal(a, m, "a")
    b = _as_marginal(b, n, "b")
    if abs(float(a.sum()) - float(b.sum())) > MARGINAL_SUM_TOL:
        raise ValidationError(
            f"infeasible marginals: sums {float(a.sum())!r} and {float(b.sum())!r} differ"
        )
    if not (epsilon > 0):
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    if max_iter < 1:
        raise ValidationError(f"max_iter must be >= 1, got {max_iter}")
    if not (tol > 0):
        raise ValidationError(f"tol must be positive, got {tol}")
    with np.errstate(divide="ignore"):
        log_a = np.log(a)
        log_b = np.log(b)
    iterations = 0
    # Warm start, with the potentials f and g kept in cost units so they
    # carry over between epsilon stages.
    f = np.zeros(m)
    g = np.zeros(n)
    stage = _ANNEAL_FROM
    while stage > epsilon and iterations < max_iter:
        for _ in range(_ANNEAL_STEPS):
            if iterations >= max_iter:
                break
            f = stage * (log_a - _lse_rows((g[None, :] - c) / stage))
            g = stage * (log_b - _lse_cols((f[:, None] - c) / stage))
            iterations += 1
        stage *= _ANNEAL_RATIO
    k = c / (-epsilon)
    phi = f / epsilon
    psi = g / epsilon
    srow = _lse_rows(k + psi[None, :])
    since_newton = 0
    plan = None
    while iterations < max_iter:
        phi = log_a - srow
        psi = log_b - _lse_cols(k + phi[:, None])
        srow = _lse_rows(k + psi[None, :])
        iterations += 1
        since_newton += 1
        # Row sums of the current plan: exp(phi + srow) is exactly
        # sum_j exp(phi_i + k_ij + psi_j) evaluated stably.
        if float(np.abs(np.exp(phi + srow) - a).max()) <= tol:
            cand = np.exp(phi[:, None] + k + psi[None, :])
            if _violation(cand, a, b) <= tol:
                plan = cand
                break
        if since_newton == _NEWTON_BLOCK:
            since_newton = 0
            # Zero marginal entries leave -inf potentials; those rows or
            # columns are dead and plain scaling handles them fine.
            if np.isfinite(phi).all() and np.isfinite(psi).all():
                phi, psi = _newton_polish(k, a, b, phi, psi)
                srow = _lse_rows(k + psi[None, :])
    converged = plan is not None
    if plan is None:
        plan = np.exp(phi[:, None] + k + psi[None, :])
    result = TransportPlan(
        plan=plan,
        cost=float(np.sum(plan * c)),
        marginal_violation=_violation(plan, a, b),
        iterations=iterations,
    )
    if not converged:
        raise NonConvergence(
            f"no convergence after {iterations} iterations: marginal violation "
            f"{result.marginal_violation:.3e} > {tol:.1e}",
            plan=result,
        )
    return result
