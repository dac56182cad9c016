from fractions import Fraction

import numpy as np
import pytest
from conftest import worked_block
from hypothesis import given, settings
from hypothesis import strategies as st

from dimgroup import core
from dimgroup.errors import InvalidInput, LevelOutOfRange
from dimgroup.samples import GenSpec, generate
from dimgroup.states import (
    coeff_bounds,
    evaluate,
    gaps_hold,
    limit_oracle,
    positive_element,
    push_element,
    sandwich_holds,
    state_intervals,
    trace,
    unit_sum,
)
from dimgroup.verifier import BlockDiagram, BlockLevel, ParamSchedule

_SEED1 = None


def seed1():
    global _SEED1
    if _SEED1 is None:
        _SEED1 = generate(GenSpec(seed=1, levels=8, schedule="fast"))
    return _SEED1


def small_block():
    bd = BlockDiagram(
        (1, 1),
        [BlockLevel(((10,),), ((1,),), ((1,),), ((10,),))],
        [((8,), (-3,), (-3,), (8,)), ((1,), (1,), (1,), (1,))],
    )
    return bd, ParamSchedule((2, "3/2"), (4, 100), (4, 5))


def _coeff_oracle(X1, X2, l_n, r, l, K):
    """Independent evaluation of the displayed coefficient formula with 2x2 matrices."""
    r, L = Fraction(r), Fraction(1, l)
    inner = ((1, Fraction(1, l_n)), (Fraction(1, l_n), 1))
    v = [inner[i][0] * X1 + inner[i][1] * X2 for i in range(2)]
    lower = ((1 / r, r * L), (r * L, 1 / r))
    upper = ((r, L / r), (L / r, r))
    d = K * (1 / r ** 2 - r ** 2 * L ** 2)
    db = K * (r ** 2 - L ** 2 / r ** 2)
    s, t = ((lower[i][0] * v[0] + lower[i][1] * v[1]) / d for i in range(2))
    sb, tb = ((upper[i][0] * v[0] + upper[i][1] * v[1]) / db for i in range(2))
    return v, (s, t, sb, tb)


def test_coeff_bounds_example():
    bd, sched = small_block()
    v, want = _coeff_oracle(20, 30, 4, "3/2", 5, 100)
    assert v == [Fraction(55, 2), 35]
    assert want[0] == Fraction(519, 638)
    cb = coeff_bounds(bd, sched, 1, positive_element(bd, 1, (2,), (3,)))
    assert (cb.s, cb.t, cb.s_bar, cb.t_bar) == want


def test_coeff_bounds_zero():
    bd, sched = small_block()
    cb = coeff_bounds(bd, sched, 1, positive_element(bd, 1, (0,), (0,)))
    assert (cb.s, cb.t, cb.s_bar, cb.t_bar) == (0, 0, 0, 0)


def test_coeff_bounds_needs_next_level():
    bd, sched = small_block()
    with pytest.raises(LevelOutOfRange):
        coeff_bounds(bd, sched, 2, positive_element(bd, 2, (1,), (1,)))


def test_positive_element_rejects_negative():
    bd, _ = small_block()
    with pytest.raises(InvalidInput):
        positive_element(bd, 1, (-1,), (1,))


def test_positive_element_least_C():
    bd, _ = worked_block()
    x = positive_element(bd, 1, (5,), (10,))
    assert x.C == 2  # u_1 = (5, 5)


# ---------------------------------------------------------------- unit and sandwich


def test_unit_intervals_contain_one():
    bd, sched = seed1()
    u = unit_sum(bd, 1)
    J = bd.sizes[0]
    x = positive_element(bd, 1, u[:J], u[J:])
    for _, _, (i1, i2) in trace(bd, sched, x, 7):
        assert i1.contains(1) and i2.contains(1)


def _generators(bd, n):
    J = bd.sizes[n - 1]
    for k in range(2 * J):
        e = core.unit(2 * J, k)
        yield positive_element(bd, n, e[:J], e[J:])


def _random_positive(bd, n, data):
    J = bd.sizes[n - 1]
    v = data.draw(st.lists(st.integers(0, 30), min_size=2 * J, max_size=2 * J).filter(any))
    return positive_element(bd, n, v[:J], v[J:])


@settings(max_examples=30, deadline=None)
@given(st.data())
def test_sandwich_and_gaps(data):
    bd, sched = seed1()
    n = data.draw(st.integers(1, 6))
    x = _random_positive(bd, n, data)
    cb = coeff_bounds(bd, sched, n, x)
    assert sandwich_holds(bd, sched, x, cb)
    assert gaps_hold(sched, x, cb)


@settings(max_examples=20, deadline=None)
@given(st.data())
def test_nesting_and_width(data):
    bd, sched = seed1()
    x = _random_positive(bd, 1, data)
    steps = trace(bd, sched, x, 7)
    for (_, cb, (i1, i2)), (_, _, (j1, j2)) in zip(steps, steps[1:]):
        assert i1.intersects(j1) and i2.intersects(j2)
    for cur, cb, (i1, _) in steps:
        r2 = sched.r[cur.level - 1] ** 2
        assert i1.width <= r2 * cb.s - cb.s_bar / r2


@settings(max_examples=15, deadline=None)
@given(st.data())
def test_additivity(data):
    bd, sched = seed1()
    x = _random_positive(bd, 1, data)
    y = _random_positive(bd, 1, data)
    J = bd.sizes[0]
    s = core.vec_add(x.vector, y.vector)
    z = positive_element(bd, 1, s[:J], s[J:])
    ex, ey, ez = (evaluate(bd, sched, v, 0, 4) for v in (x, y, z))
    assert (ex.sigma1 + ey.sigma1).intersects(ez.sigma1)
    assert (ex.sigma2 + ey.sigma2).intersects(ez.sigma2)


def test_push_carries_C():
    bd, _ = seed1()
    x = next(_generators(bd, 1))
    y = push_element(bd, x)
    assert y.level == 2 and y.C == x.C


# ---------------------------------------------------------------- float oracle


def float_state_rows(bd, n):
    """Power iteration on normalised transposed products, then solve for the unit normalisation."""
    N = bd.levels
    J = bd.sizes[N - 1]
    Y = np.zeros((2, 2 * J))
    Y[0, :J] = 1
    Y[1, J:] = 1
    for k in range(N - 1, n - 1, -1):
        A = bd.matrices[k - 1].block_matrix()
        top = max(max(row) for row in A)
        Y = Y @ np.array([[x / top for x in row] for row in A], dtype=float)
        Y = Y / np.abs(Y).max(axis=1, keepdims=True)
    u1 = np.array(bd.unit_vector(n, 1), dtype=float)
    u2 = np.array(bd.unit_vector(n, 2), dtype=float)
    return np.linalg.solve(np.column_stack([Y @ u1, Y @ u2]), Y)


def test_agrees_with_float_oracle():
    bd, sched = seed1()
    rows = float_state_rows(bd, 1)
    for k, x in enumerate(_generators(bd, 1)):
        res = evaluate(bd, sched, x, Fraction(1, 10 ** 6), 10)
        assert not res.exhausted
        assert res.sigma1.width < Fraction(1, 10 ** 6)
        assert abs(float(res.sigma1.mid) - rows[0][k]) < 1e-6
        assert abs(float(res.sigma2.mid) - rows[1][k]) < 1e-6


def test_exhaustion_flag():
    bd, sched = seed1()
    res = evaluate(bd, sched, next(_generators(bd, 1)), 0, 2)
    assert res.exhausted and res.depth == 2


def test_invalid_schedule_rejected():
    bd, _ = worked_block(A21=8)
    sched = ParamSchedule(("3/2", "10/7"), (8, 130), (4, 5))
    x = positive_element(bd, 1, (1,), (0,))
    with pytest.raises(InvalidInput):
        evaluate(bd, sched, x, Fraction(1, 100), 5)


# ---------------------------------------------------------------- limit oracle


def test_limit_oracle_unit_row():
    bd, sched = seed1()
    oracle = limit_oracle(bd, sched)
    rows = oracle.best_rows(1)
    u1 = bd.unit_vector(1, 1)
    val1 = sum((iv * c for iv, c in zip(rows[0], u1)), core.RatInterval.point(0))
    val2 = sum((iv * c for iv, c in zip(rows[1], u1)), core.RatInterval.point(0))
    assert val1.contains(1) and val2.contains(0)


def test_limit_oracle_push_consistency():
    bd, sched = seed1()
    oracle = limit_oracle(bd, sched)
    r1, r2 = oracle.best_rows(1), oracle.best_rows(2)
    A = bd.matrices[0].block_matrix()
    for row_n, row_next in ((r1[0], r2[0]), (r1[1], r2[1])):
        for c in range(len(row_n)):
            pushed = sum((row_next[k] * A[k][c] for k in range(len(A))), core.RatInterval.point(0))
            assert pushed.intersects(row_n[c])


def test_state_intervals_orientation():
    bd, sched = small_block()
    cb = coeff_bounds(bd, sched, 1, positive_element(bd, 1, (2,), (3,)))
    i1, i2 = state_intervals(cb, 2)
    assert i1.lo == cb.s_bar / 4 and i1.hi == 4 * cb.s
