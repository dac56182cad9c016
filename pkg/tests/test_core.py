import itertools
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dimgroup import core
from dimgroup.core import RatInterval
from dimgroup.errors import BigIntLimitExceeded, DegenerateBasis, NoSolution, ShapeMismatch

small = st.integers(-30, 30)
rationals = st.fractions(max_denominator=50).filter(lambda q: abs(q) < 1000)


def vec2(elems=small):
    return st.tuples(elems, elems)


def independent_basis():
    return st.tuples(vec2(st.integers(-12, 12)), vec2(st.integers(-12, 12))).filter(
        lambda b: b[0][0] * b[1][1] - b[0][1] * b[1][0] != 0
    )


# ---------------------------------------------------------------- matrices


def test_mat_mul_identity():
    assert core.mat_mul(((1, 0), (0, 1)), ((7, 2), (3, 5))) == ((7, 2), (3, 5))


def test_mat_mul_square():
    assert core.mat_mul(((2, 1), (1, 2)), ((2, 1), (1, 2))) == ((5, 4), (4, 5))


def test_mat_mul_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        core.mat_mul(((1, 2, 3), (4, 5, 6)), ((1, 0), (0, 1)))


def test_bit_cap(monkeypatch):
    monkeypatch.setenv(core.BITS_ENV, "8")
    with pytest.raises(BigIntLimitExceeded):
        core.mat_mul(((300,),), ((2,),))
    assert core.mat_mul(((3,),), ((2,),)) == ((6,),)


@given(rationals, rationals)
def test_rational_roundtrip(a, b):
    assert (a + b) - b == a
    assert core.rat(f"{a.numerator}/{a.denominator}") == a


# ---------------------------------------------------------------- intervals


@given(rationals, rationals, rationals, rationals, st.floats(0, 1), st.floats(0, 1))
def test_interval_arithmetic_encloses(a, b, c, d, t, u):
    x = RatInterval.hull(a, b)
    y = RatInterval.hull(c, d)
    px = x.lo + Fraction(t) * x.width
    py = y.lo + Fraction(u) * y.width
    assert (x + y).contains(px + py)
    assert (x - y).contains(px - py)
    assert (x * y).contains(px * py)
    assert (x * 3).contains(3 * px)


def test_interval_rejects_empty():
    with pytest.raises(ValueError):
        RatInterval(1, 0)


# ---------------------------------------------------------------- reduction


def test_gauss_reduce_examples():
    assert core.gauss_reduce((1, 0), (3, 1)) == ((1, 0), (0, 1))
    assert core.gauss_reduce((1, 0), (0, 1)) == ((1, 0), (0, 1))
    c1, c2 = core.gauss_reduce((1, 1), (2, 0))
    assert {c1, c2} <= {(1, 1), (1, -1), (-1, -1), (-1, 1)}


def test_gauss_reduce_degenerate():
    with pytest.raises(DegenerateBasis):
        core.gauss_reduce((1, 2), (2, 4))


def _expressible(basis, v):
    m = (tuple(b[0] for b in basis), tuple(b[1] for b in basis))
    return core.solve_diophantine(m, v) is not NoSolution


@settings(max_examples=100)
@given(independent_basis())
def test_gauss_reduce_same_lattice(basis):
    c1, c2 = core.gauss_reduce(*basis)
    for v in basis:
        assert _expressible((c1, c2), v)
    for v in (c1, c2):
        assert _expressible(basis, v)
    n1 = c1[0] ** 2 + c1[1] ** 2
    assert n1 <= c2[0] ** 2 + c2[1] ** 2
    assert 2 * abs(c1[0] * c2[0] + c1[1] * c2[1]) <= n1


# ---------------------------------------------------------------- closest point


def test_closest_point_examples():
    std = ((1, 0), (0, 1))
    assert core.closest_point(std, (Fraction(1, 3), Fraction(2, 3))) == (0, 1)
    assert core.closest_point(std, (0, 0)) == (0, 0)
    assert core.closest_point(std, (Fraction(1, 2), 0)) == (0, 0)


def _brute_closest(basis, target, radius=40):
    best = None
    for a, b in itertools.product(range(-radius, radius + 1), repeat=2):
        p = (a * basis[0][0] + b * basis[1][0], a * basis[0][1] + b * basis[1][1])
        d = (p[0] - target[0]) ** 2 + (p[1] - target[1]) ** 2
        if best is None or d < best:
            best = d
    return best


@settings(max_examples=100, deadline=None)
@given(independent_basis().filter(lambda b: abs(b[0][0] * b[1][1] - b[0][1] * b[1][0]) > 2),
       vec2(st.fractions(-20, 20, max_denominator=7)))
def test_closest_point_matches_brute_force(basis, target):
    p = core.closest_point(basis, target)
    d = (p[0] - target[0]) ** 2 + (p[1] - target[1]) ** 2
    assert d == _brute_closest(basis, target)
    assert _expressible(basis, p)


# ---------------------------------------------------------------- diophantine


def test_solve_diophantine_examples():
    assert core.solve_diophantine(((2, 0), (0, 3)), (4, 9)) == (2, 3)
    assert core.solve_diophantine(((2,), (4,)), (1, 2)) is NoSolution
    assert core.solve_diophantine(((1, 1), (0, 2)), (3, 4)) == (1, 2)


@settings(max_examples=150, deadline=None)
@given(st.lists(vec2(st.integers(-6, 6)), min_size=1, max_size=2), vec2(st.integers(-12, 12)))
def test_solve_diophantine_exact_or_refuted(cols, t):
    m = (tuple(c[0] for c in cols), tuple(c[1] for c in cols))
    x = core.solve_diophantine(m, t)
    if x is NoSolution:
        rng = range(-20, 21)
        for xs in itertools.product(rng, repeat=len(cols)):
            assert core.mat_vec(m, xs) != tuple(t)
    else:
        assert core.mat_vec(m, x) == tuple(t)


@given(st.lists(vec2(st.integers(-50, 50)), min_size=3, max_size=5), vec2(st.integers(-500, 500)))
def test_solve_diophantine_wide_systems(cols, t):
    m = (tuple(c[0] for c in cols), tuple(c[1] for c in cols))
    x = core.solve_diophantine(m, t)
    if x is not NoSolution:
        assert core.mat_vec(m, x) == tuple(t)


# ---------------------------------------------------------------- branch and prune


def test_branch_and_prune_examples():
    assert core.branch_and_prune([((3, 5), 7, 7)], [(-10, 10), (-10, 10)]) == (-6, 5)
    assert core.branch_and_prune([((2, 2), 3, 3)], [(-10, 10), (-10, 10)]) is NoSolution


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.tuples(st.integers(-4, 4), st.integers(-4, 4)), st.integers(-8, 8), st.integers(0, 6)),
                min_size=1, max_size=3))
def test_branch_and_prune_sound_and_complete(rows):
    cons = [(c, lo, lo + w) for c, lo, w in rows]
    bounds = [(-5, 5), (-5, 5)]
    got = core.branch_and_prune(cons, bounds)

    def ok(x):
        return all(lo <= c[0] * x[0] + c[1] * x[1] <= hi for c, lo, hi in cons)

    if got is NoSolution:
        assert not any(ok(x) for x in itertools.product(range(-5, 6), repeat=2))
    else:
        assert ok(got) and all(lo <= v <= hi for v, (lo, hi) in zip(got, bounds))
