from fractions import Fraction
from math import prod

import pytest
from conftest import worked_presentation
from hypothesis import given, settings
from hypothesis import strategies as st
from test_diagram import constant_presentation

from dimgroup import core
from dimgroup.cones import dual_basis
from dimgroup.constructor import (
    ConeFactorization,
    PipelineConfig,
    choose_l,
    choose_multipliers,
    close_factorization,
    cone_factor,
    deep_representation,
    equalize_rows,
    k_threshold,
    multiplier,
    split_refine,
    verify_factorization,
)
from dimgroup.diagram import GroupElement, combination, push
from dimgroup.errors import EntryTooSmall, InvalidInput, LevelExhausted, NoWindow, SearchExhausted
from dimgroup.samples import GenSpec, flatten, generate
from dimgroup.verifier import check_all

# ---------------------------------------------------------------- refinement


@pytest.mark.parametrize("v, s, want", [((2,), "3/2", 9), ((1,), 2, 3), ((2, 3), "3/2", 25)])
def test_k_threshold_examples(v, s, want):
    assert k_threshold(v, s) == want


def test_split_refine_example():
    Ap, B, N = split_refine(((151,),), (2,), "3/2", 9)
    assert (Ap, B, N) == (((29, 1),), ((5,), (6,)), 10)
    assert core.mat_vec(B, (2,)) == (10, 12)
    assert 9 <= 10 and 12 <= Fraction(27, 2)


def test_split_refine_boundary_entry():
    Ap, B, _ = split_refine(((150,),), (2,), "3/2", 9)
    assert Ap == ((0, 25),)
    assert core.mat_mul(Ap, B) == ((150,),)


def test_split_refine_window_of_multiples():
    _, B, N = split_refine(((10 ** 5, 10 ** 5),), (2, 3), "3/2", 25)
    assert N == 30
    assert core.mat_vec(B, (2, 3)) == (30, 30, 32, 33)


def test_split_refine_errors():
    with pytest.raises(NoWindow):
        split_refine(((151,),), (2,), "3/2", 2)
    with pytest.raises(EntryTooSmall):
        split_refine(((10,),), (2,), "3/2", 9)


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_split_refine_identities(data):
    J = data.draw(st.integers(1, 3))
    I = data.draw(st.integers(1, 3))
    v = data.draw(st.lists(st.integers(1, 6), min_size=J, max_size=J))
    s = 1 + Fraction(1, data.draw(st.integers(2, 6)))
    K = k_threshold(v, s) + data.draw(st.integers(0, 40))
    P = prod(v)
    N = -(-K // P) * P
    need = [(N // x) ** 3 + (N // x) ** 2 + 1 for x in v]
    A = [[data.draw(st.integers(n, 4 * n)) for n in need] for _ in range(I)]
    Ap, B, N2 = split_refine(A, v, s, K)
    assert N2 == N
    assert core.mat_mul(Ap, B) == core.as_mat(A)
    assert all(x >= 0 for row in Ap for x in row)
    Bv = core.mat_vec(B, v)
    assert Bv == (N,) * J + tuple(N + x for x in v)
    assert all(K <= x <= s * K for x in Bv)


# ---------------------------------------------------------------- l and multipliers


def l_conditions(cols, m, l):
    """The five inequalities per column, evaluated directly."""
    s = 1 + Fraction(1, m)
    h = dual_basis(l)
    for x, y in cols:
        for own, hj in ((x, h[0]), (y, h[1])):
            c = x * hj[0] + y * hj[1]
            if not (0 < c < Fraction(1, m) and own / s < l * c < s * own):
                return False
    return True


def test_choose_l_examples():
    one = [(Fraction(1), Fraction(1))]
    assert choose_l(one, 2, 3) == 3
    assert choose_l(one, 2, 10) == 10
    col = [(Fraction(3), Fraction(1))]
    want = next(l for l in range(2, 10 ** 4) if l_conditions(col, 2, l))
    assert want > 3
    assert choose_l(col, 2, 2) == want


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(st.fractions(Fraction(1, 20), 20, max_denominator=20),
                          st.fractions(Fraction(1, 20), 20, max_denominator=20)), min_size=1, max_size=3),
       st.integers(2, 6), st.integers(2, 30))
def test_choose_l_minimal(cols, m, l0):
    l = choose_l(cols, m, l0)
    assert l >= l0 and l_conditions(cols, m, l)
    if l > l0:
        assert not l_conditions(cols, m, l - 1)


def test_choose_l_rejects_nonpositive():
    with pytest.raises(InvalidInput):
        choose_l([(Fraction(1), Fraction(0))], 2, 3)


@pytest.mark.parametrize("x, want", [(Fraction(1, 4), 5), (Fraction(1, 5), 6), (Fraction(2, 5), 3)])
def test_multiplier_examples(x, want):
    assert multiplier(x, Fraction(3, 2)) == want


def test_choose_multipliers_bounds():
    cols = [(Fraction(3), Fraction(2)), (Fraction(1), Fraction(1))]
    s = Fraction(3, 2)
    s1, s2 = choose_multipliers(cols, 4, s)
    h = dual_basis(4)
    for (x, y), a, b in zip(cols, s1, s2):
        assert 1 < a * (x * h[0][0] + y * h[0][1]) < s
        assert 1 < b * (x * h[1][0] + y * h[1][1]) < s


# ---------------------------------------------------------------- deep representation


def test_deep_representation_examples():
    p = constant_presentation(5)
    level, A = deep_representation(p, [GroupElement(1, (1, 0))], 4)
    assert (level, A) == (3, ((5,), (4,)))
    assert deep_representation(p, [GroupElement(1, (1, 1))], 1) == (1, ((1,), (1,)))


def test_deep_representation_exhausted():
    p = constant_presentation(5)
    with pytest.raises(LevelExhausted):
        deep_representation(p, [GroupElement(1, (1, -1))], 1)


# ---------------------------------------------------------------- cone factorization


def _planted():
    p = worked_presentation()
    u1, u2 = p.u(1, 2), p.u(2, 2)

    def el(a, b):
        return GroupElement(2, tuple(a * x + b * y for x, y in zip(u1, u2)))

    eta = [el(4, 1), el(9, 2)]
    B = ((9, 7), (1, 1))
    gens = [combination(p, [B[0][i], B[1][i]], eta) for i in range(2)]
    return p, gens


def test_cone_factor_planted():
    p, gens = _planted()
    tests = [(1, 0), (0, 1), (1, -1)]
    cf = cone_factor(p, gens, tests, 4, 1, unit=(1, 1))
    assert all(it.ok for it in cf.items)
    for i, g in enumerate(gens):
        e = combination(p, [row[i] for row in cf.B], cf.eta_gens)
        assert push(p, e, 2) == push(p, g, 2)
    assert all(x >= 1 for row in cf.B for x in row)
    assert all(x >= 0 for f in tests for x in core.mat_vec(cf.B, f))


def test_cone_factor_infeasible():
    p, gens = _planted()
    with pytest.raises(SearchExhausted):
        cone_factor(p, gens, [(-1, 0)], 4, 1)


def _manual(p, eta_sigmas, B, l=4):
    u1, u2 = p.u(1, 1), p.u(2, 1)
    eta = tuple(GroupElement(1, tuple(a * x + b * y for x, y in zip(u1, u2))) for a, b in eta_sigmas)
    gens = tuple(combination(p, [row[i] for row in B], eta) for i in range(len(B[0])))
    return ConeFactorization(eta, B, l, 1, gens, ((1, 0), (0, 1)))


def test_equalize_rows_pads_shorter():
    p = flatten(*generate(GenSpec(seed=1, levels=6, j_max=1)))
    a = _manual(p, [(4, 1), (9, 2)], ((9, 7), (1, 1)))
    b = _manual(p, [(4, 1), (9, 2), (14, 3)], ((1, 1), (1, 1), (1, 1)))
    assert all(it.ok for it in verify_factorization(p, a))
    a2, b2 = equalize_rows(a, b, p)
    assert a2.J == b2.J == 3
    assert b2 is b
    assert a2.B[-1] == a2.B[-2]
    assert all(it.ok for it in verify_factorization(p, a2))


# ---------------------------------------------------------------- closing


def test_close_factorization_planted():
    p = constant_presentation(4)
    eta1 = [GroupElement(2, (2, 1))]
    eta2 = [GroupElement(2, (1, 2))]
    nt, C1, C2, items = close_factorization(p, eta1, eta2, ((1, 0),), ((0, 1),), 1)
    assert nt == 2
    assert C1 == ((2,), (1,)) and C2 == ((1,), (2,))
    assert all(it.ok for it in items)


def test_close_factorization_needs_positive_columns():
    p = constant_presentation(4)
    nt, C1, C2, _ = close_factorization(p, [GroupElement(2, (1, 0))], [GroupElement(2, (0, 1))],
                                        ((2, 1),), ((1, 2),), 1)
    assert nt == 3
    lhs = core.mat_add(core.mat_mul(C1, ((2, 1),)), core.mat_mul(C2, ((1, 2),)))
    assert lhs == ((5, 4), (4, 5))


def test_close_factorization_prefix_too_short():
    p = constant_presentation(3)
    with pytest.raises(LevelExhausted):
        close_factorization(p, [GroupElement(3, (1, 1))], [GroupElement(3, (1, 1))], ((1, 0),), ((0, 1),), 3)


# ---------------------------------------------------------------- configuration


@pytest.mark.parametrize("r", [(2, Fraction(3, 2)), (Fraction(3, 2), Fraction(3, 2)), (1,)])
def test_config_rejects_bad_r(r):
    with pytest.raises(InvalidInput):
        PipelineConfig(r=r, a=(3,), stages=len(r))


def test_config_needs_a_values():
    with pytest.raises(InvalidInput):
        PipelineConfig(r=(Fraction(3, 2), Fraction(4, 3)), a=(), stages=2)


# ---------------------------------------------------------------- pipeline output


def _product(p, lo, hi):
    out = core.identity(p.diagram.size(lo))
    for k in range(lo, hi):
        out = core.mat_mul(p.diagram.matrix(k), out)
    return out


@pytest.mark.slow
def test_pipeline_stage_identities(pipeline_runs):
    for p, cfg, bd, sched, bundle in pipeline_runs.values():
        for st_ in bundle.stages:
            lhs = core.mat_add(core.mat_mul(st_.C1, st_.B1), core.mat_mul(st_.C2, st_.B2))
            assert lhs == _product(p, st_.level, st_.next_level)


@pytest.mark.slow
def test_pipeline_units_threaded(pipeline_runs):
    for p, cfg, bd, sched, bundle in pipeline_runs.values():
        for k, st_ in enumerate(bundle.stages, start=1):
            v1, v2 = p.u(1, st_.level), p.u(2, st_.level)
            assert bd.u(k, "u11") == core.mat_vec(st_.B1, v1)
            assert bd.u(k, "u12") == core.mat_vec(st_.B2, v1)
            assert bd.u(k, "u21") == core.mat_vec(st_.B1, v2)
            assert bd.u(k, "u22") == core.mat_vec(st_.B2, v2)
        for a, b in zip(bundle.stages, bundle.stages[1:]):
            assert a.next_level == b.level


@pytest.mark.slow
def test_pipeline_off_diagonal_floor(pipeline_runs):
    for p, cfg, bd, sched, bundle in pipeline_runs.values():
        for n, lvl in enumerate(bd.matrices):
            floor = cfg.a[n]
            assert min(x for blk in (lvl.A12, lvl.A21) for row in blk for x in row) >= floor


@pytest.mark.slow
def test_pipeline_certified(pipeline_runs):
    for p, cfg, bd, sched, bundle in pipeline_runs.values():
        assert check_all(bd, sched).passed
        assert bundle.passed and bundle.replay()
        assert all(st_.K % st_.l == 0 for st_ in bundle.stages)
        assert sched.M == tuple(b.K // a.K for a, b in zip(bundle.stages, bundle.stages[1:]))
