import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from mecvideo.lp import INFEASIBLE, LPError, lp_solve


def test_single_variable():
    res = lp_solve([1.0], [[1.0]], [5.0], lo=0.0, hi=10.0)
    assert res.optimal
    assert res.x[0] == pytest.approx(5.0)


def test_two_dimensional_vertex():
    res = lp_solve([1.0, 1.0], [[1.0, 2.0]], [4.0], lo=0.0, hi=3.0)
    assert res.x == pytest.approx([3.0, 0.5])
    assert res.value == pytest.approx(3.5)


def test_empty_region():
    res = lp_solve([1.0], [[1.0]], [-1.0], lo=0.0, hi=10.0)
    assert res.status == INFEASIBLE
    assert res.x is None


def test_crossed_box_is_infeasible():
    assert lp_solve([1.0], bounds=[(2.0, 1.0)]).status == INFEASIBLE


def test_no_rows_uses_box():
    res = lp_solve([1.0, -1.0, 0.0], lo=-1.0, hi=2.0)
    assert res.x.tolist() == [2.0, -1.0, -1.0]


def test_infinite_bounds_rejected():
    with pytest.raises(ValueError):
        lp_solve([1.0], [[1.0]], [1.0], lo=0.0, hi=np.inf)


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        lp_solve([1.0, 1.0], [[1.0]], [1.0])


def test_iteration_cap_raises():
    rng = np.random.default_rng(0)
    A = rng.uniform(0.1, 1.0, (6, 6))
    with pytest.raises(LPError):
        lp_solve(np.ones(6), A, np.ones(6), max_iter=1)


def test_warm_start_gives_same_optimum():
    rng = np.random.default_rng(1)
    A = rng.uniform(0, 1, (5, 8))
    b = rng.uniform(1, 3, 5)
    first = lp_solve(rng.normal(size=8), A, b, lo=0.0, hi=2.0)
    c = rng.normal(size=8)
    cold = lp_solve(c, A, b, lo=0.0, hi=2.0)
    warm = lp_solve(c, A, b, lo=0.0, hi=2.0, warm_start=first.basis)
    assert warm.value == pytest.approx(cold.value, abs=1e-9)


def _reference(c, A, b, lo, hi):
    res = linprog(-np.asarray(c), A_ub=A, b_ub=b, bounds=list(zip(lo, hi)), method="highs")
    return res.status, (-res.fun if res.status == 0 else None)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 7), st.integers(1, 6), st.booleans())
def test_matches_highs(seed, n, m, integral):
    rng = np.random.default_rng(seed)
    if integral:
        # small integers make degenerate vertices common
        A = rng.integers(-2, 4, (m, n)).astype(float)
        b = rng.integers(-2, 6, m).astype(float)
        c = rng.integers(-3, 4, n).astype(float)
    else:
        A = rng.normal(size=(m, n))
        b = rng.normal(1.0, 2.0, m)
        c = rng.normal(size=n)
    lo = -rng.integers(0, 3, n).astype(float)
    hi = lo + rng.integers(1, 5, n)
    status, value = _reference(c, A, b, lo, hi)
    res = lp_solve(c, A, b, lo=lo, hi=hi)
    if status == 2:
        assert res.status == INFEASIBLE
        return
    assert status == 0
    assert res.optimal
    assert res.value == pytest.approx(value, abs=1e-7 * max(1.0, abs(value)))
    assert np.all(A @ res.x <= b + 1e-7 * np.maximum(1.0, np.abs(b)))
    assert np.all(res.x >= lo - 1e-9) and np.all(res.x <= hi + 1e-9)
