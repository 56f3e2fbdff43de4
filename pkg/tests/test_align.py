"""Tests for the DTW and optimal-transport solvers."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import min_transport_cost, min_warp_cost
from seqsim.align import (
    EXACT_MARGINAL_TOL,
    NonConvergence,
    dtw,
    dtw_cost,
    ot_exact,
    sinkhorn,
)
from seqsim.corpus import ComputationError, ValidationError


def uniform(n):
    return np.full(n, 1.0 / n)


def random_instances(seed, count, max_side, scale=2.0):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        m, n = rng.integers(1, max_side + 1, size=2)
        yield rng.random((m, n)) * scale


# ---------------------------------------------------------------------------
# DTW


def test_dtw_cost_equals_exhaustive_enumeration():
    count = 0
    for c in random_instances(seed=11, count=120, max_side=5):
        assert dtw_cost(c) == min_warp_cost(c)
        count += 1
    assert count == 120


def test_dtw_path_cost_agrees_with_table_cost():
    for c in random_instances(seed=12, count=40, max_side=6):
        path = dtw(c)
        assert path.cost == dtw_cost(c)


def test_dtw_path_is_valid_and_recomputes_cost():
    for c in random_instances(seed=13, count=40, max_side=6):
        m, n = c.shape
        path = dtw(c)
        assert path.steps[0] == (1, 1)
        assert path.steps[-1] == (m, n)
        for (i0, j0), (i1, j1) in zip(path.steps, path.steps[1:]):
            assert (i1 - i0, j1 - j0) in {(1, 0), (0, 1), (1, 1)}
        acc = 0.0
        for i, j in path.steps:
            acc = acc + c[i - 1, j - 1]
        assert acc == path.cost


def test_dtw_tie_break_prefers_diagonal_then_vertical():
    # With an all-zero grid every path is optimal, so the recovered path
    # shows the pure tie-break order: diagonal as long as possible, then
    # the remaining straight run.
    path = dtw(np.zeros((3, 5)))
    assert path.steps == ((1, 1), (1, 2), (1, 3), (2, 4), (3, 5))
    path = dtw(np.zeros((5, 3)))
    assert path.steps == ((1, 1), (2, 1), (3, 1), (4, 2), (5, 3))


def test_dtw_is_deterministic_across_runs():
    rng = np.random.default_rng(14)
    c = rng.integers(0, 3, size=(7, 7)).astype(float)
    first = dtw(c)
    for _ in range(5):
        again = dtw(c)
        assert again.steps == first.steps
        assert again.cost == first.cost


def test_dtw_single_cell():
    path = dtw([[0.7]])
    assert path.steps == ((1, 1),)
    assert path.cost == 0.7


def test_dtw_single_row_sums_all_cells():
    c = np.array([[0.3, 0.1, 0.4]])
    assert dtw_cost(c) == 0.3 + 0.1 + 0.4
    assert dtw(c).steps == ((1, 1), (1, 2), (1, 3))


@settings(deadline=None, max_examples=60)
@given(
    arrays(
        np.float64,
        st.tuples(st.integers(1, 4), st.integers(1, 4)),
        elements=st.floats(0.0, 1e6, allow_nan=False),
    )
)
def test_dtw_matches_enumeration_on_arbitrary_grids(c):
    assert dtw_cost(c) == min_warp_cost(c)


def test_dtw_rejects_bad_input():
    with pytest.raises(ValidationError):
        dtw_cost(np.zeros((0, 3)))
    with pytest.raises(ValidationError):
        dtw_cost([[np.nan]])
    with pytest.raises(ValidationError):
        dtw_cost(np.zeros(4))


# ---------------------------------------------------------------------------
# Exact transport


def test_ot_exact_matches_vertex_enumeration():
    rng = np.random.default_rng(21)
    seen = 0
    for trial in range(60):
        m, n = rng.integers(1, 5, size=2)
        c = rng.random((m, n)) * 2
        if trial % 2:
            a, b = uniform(m), uniform(n)
        else:
            a = rng.random(m) + 0.1
            a /= a.sum()
            b = rng.random(n) + 0.1
            b /= b.sum()
        res = ot_exact(c, a, b)
        assert res.cost == pytest.approx(min_transport_cost(c, a, b), abs=1e-9)
        assert res.marginal_violation <= EXACT_MARGINAL_TOL
        assert (res.plan >= 0).all()
        seen += 1
    assert seen == 60


def test_ot_exact_single_row_copies_target_marginal():
    c = np.array([[0.2, 0.5]])
    res = ot_exact(c, [1.0], [0.4, 0.6])
    np.testing.assert_allclose(res.plan, [[0.4, 0.6]], atol=1e-12)
    assert res.cost == pytest.approx(0.4 * 0.2 + 0.6 * 0.5, abs=1e-12)


def test_ot_exact_identity_costs_zero():
    # Zero diagonal with expensive off-diagonal cells: optimal plan is the
    # scaled identity and costs nothing.
    c = 1.0 - np.eye(3)
    res = ot_exact(c, uniform(3), uniform(3))
    assert res.cost == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(res.plan, np.eye(3) / 3, atol=1e-9)


def test_ot_exact_rejects_bad_marginals():
    c = np.zeros((2, 2))
    with pytest.raises(ValidationError):
        ot_exact(c, [0.5, 0.6], [0.5, 0.5])
    with pytest.raises(ValidationError):
        ot_exact(c, [1.2, -0.2], [0.5, 0.5])
    with pytest.raises(ValidationError):
        ot_exact(c, [0.5, 0.5, 0.0], [0.5, 0.5])


# ---------------------------------------------------------------------------
# Sinkhorn


def test_sinkhorn_small_epsilon_tracks_exact_cost():
    rng = np.random.default_rng(22)
    for _ in range(20):
        m, n = rng.integers(1, 9, size=2)
        c = rng.random((m, n)) * 2
        a, b = uniform(m), uniform(n)
        res = sinkhorn(c, a, b, epsilon=0.005, max_iter=50000, tol=1e-9)
        assert res.marginal_violation <= 1e-9
        exact = ot_exact(c, a, b)
        assert abs(res.cost - exact.cost) <= 1e-3
        # The entropic plan is feasible up to the tolerance, so its cost
        # cannot undercut the optimum by more than that slack.
        assert res.cost >= exact.cost - 1e-6


def test_sinkhorn_plan_satisfies_marginals():
    rng = np.random.default_rng(23)
    c = rng.random((5, 7)) * 2
    a, b = uniform(5), uniform(7)
    res = sinkhorn(c, a, b, epsilon=0.05, max_iter=5000, tol=1e-9)
    assert (res.plan >= 0).all()
    np.testing.assert_allclose(res.plan.sum(axis=1), a, atol=1e-9)
    np.testing.assert_allclose(res.plan.sum(axis=0), b, atol=1e-9)
    assert res.iterations >= 1


def test_sinkhorn_accepts_nonuniform_marginals():
    c = np.array([[0.0, 1.0], [1.0, 0.0]])
    res = sinkhorn(c, [0.3, 0.7], [0.6, 0.4], epsilon=0.01, max_iter=20000, tol=1e-9)
    exact = ot_exact(c, [0.3, 0.7], [0.6, 0.4])
    assert abs(res.cost - exact.cost) <= 1e-2


def test_sinkhorn_cost_grows_with_epsilon_on_identity_instance():
    # Exact optimum is zero mass off the diagonal; entropy pushes mass
    # off it, so a larger epsilon must cost more.
    c = 1.0 - np.eye(3)
    a = b = uniform(3)
    loose = sinkhorn(c, a, b, epsilon=0.5, max_iter=10000, tol=1e-9)
    tight = sinkhorn(c, a, b, epsilon=0.005, max_iter=50000, tol=1e-9)
    assert loose.cost > tight.cost
    assert tight.cost == pytest.approx(0.0, abs=1e-3)


def test_sinkhorn_single_cell_is_trivial():
    res = sinkhorn([[0.4]], [1.0], [1.0], epsilon=0.05, max_iter=100, tol=1e-9)
    np.testing.assert_allclose(res.plan, [[1.0]], atol=1e-12)
    assert res.cost == pytest.approx(0.4, abs=1e-12)


def test_sinkhorn_nonconvergence_carries_last_iterate():
    rng = np.random.default_rng(24)
    c = rng.random((6, 7)) * 2
    a, b = uniform(6), uniform(7)
    with pytest.raises(NonConvergence) as exc_info:
        sinkhorn(c, a, b, epsilon=0.005, max_iter=3, tol=1e-9)
    plan = exc_info.value.plan
    assert plan is not None
    assert plan.iterations == 3
    assert plan.plan.shape == (6, 7)
    assert plan.marginal_violation > 1e-9
    assert isinstance(exc_info.value, ComputationError)


def test_sinkhorn_is_deterministic():
    rng = np.random.default_rng(25)
    c = rng.random((8, 8)) * 2
    a = b = uniform(8)
    first = sinkhorn(c, a, b, epsilon=0.01, max_iter=50000, tol=1e-9)
    again = sinkhorn(c, a, b, epsilon=0.01, max_iter=50000, tol=1e-9)
    assert first.plan.tobytes() == again.plan.tobytes()
    assert first.cost == again.cost
    assert first.iterations == again.iterations


def test_sinkhorn_rejects_bad_parameters():
    c = np.zeros((2, 2))
    a = b = uniform(2)
    with pytest.raises(ValidationError):
        sinkhorn(c, a, b, epsilon=0.0)
    with pytest.raises(ValidationError):
        sinkhorn(c, a, b, epsilon=-1.0)
    with pytest.raises(ValidationError):
        sinkhorn(c, a, b, epsilon=0.05, max_iter=0)
    with pytest.raises(ValidationError):
        sinkhorn(c, a, b, epsilon=0.05, tol=0.0)
    with pytest.raises(ValidationError):
        sinkhorn(c, [0.4, 0.4], b, epsilon=0.05)
