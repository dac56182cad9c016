from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dimgroup import core
from dimgroup.diagram import validate
from dimgroup.errors import GenerationFailed, InvalidInput
from dimgroup.samples import GenSpec, flatten, generate, r_schedule
from dimgroup.verifier import check_all, check_recursion


def test_seed1_four_levels_passes():
    bd, sched = generate(GenSpec(seed=1, levels=4))
    assert bd.levels == 4
    assert check_all(bd, sched).passed


def test_deterministic():
    spec = GenSpec(seed=1, levels=4)
    assert generate(spec) == generate(spec)
    assert generate(GenSpec(seed=2, levels=4)) != generate(spec)


def test_minimal_two_level():
    bd, sched = generate(GenSpec(seed=1, levels=2, j_max=1))
    assert bd.sizes == (1, 1)
    assert check_all(bd, sched).passed


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 10 ** 6), st.sampled_from(["harmonic", "geometric", "fast"]), st.integers(1, 3))
def test_generated_diagrams_pass(seed, schedule, j_max):
    bd, sched = generate(GenSpec(seed=seed, levels=3, j_max=j_max, schedule=schedule))
    assert check_all(bd, sched).passed


def test_r_schedules():
    assert r_schedule("harmonic", 3) == (Fraction(3, 2), Fraction(4, 3), Fraction(5, 4))
    assert r_schedule("geometric", 2) == (Fraction(3, 2), Fraction(5, 4))
    assert r_schedule("fast", 3) == (Fraction(3, 2), Fraction(9, 8), Fraction(129, 128))
    assert r_schedule(["3/2", "5/4"], 2) == (Fraction(3, 2), Fraction(5, 4))


def test_invalid_specs():
    with pytest.raises(InvalidInput):
        GenSpec(levels=0)
    with pytest.raises(InvalidInput):
        generate(GenSpec(levels=3, schedule="nope"))
    with pytest.raises(InvalidInput):
        generate(GenSpec(levels=2, schedule=["5/4", "3/2"]))
    with pytest.raises(InvalidInput):
        generate(GenSpec(levels=3, schedule=["3/2"]))


def test_generation_failure_reports_level():
    with pytest.raises(GenerationFailed) as info:
        generate(GenSpec(seed=1, levels=3, retries=0))
    assert info.value.diagnostics["level"] == 2


# ---------------------------------------------------------------- flattening


def test_flatten_shapes():
    bd, sched = generate(GenSpec(seed=1, levels=2, j_max=1))
    p = flatten(bd, sched)
    assert p.diagram.sizes == (2, 2)
    assert p.diagram.matrices[0] == bd.matrices[0].block_matrix()


def test_flatten_u_recursion():
    bd, sched = generate(GenSpec(seed=3, levels=4))
    assert check_recursion(bd).passed
    p = flatten(bd, sched)
    for n in range(1, 4):
        for i in (1, 2):
            assert core.mat_vec(p.diagram.matrix(n), p.u(i, n)) == p.u(i, n + 1)


def test_flatten_oracle_unit_values():
    bd, sched = generate(GenSpec(seed=1, levels=5))
    p = flatten(bd, sched)
    for n in (1, 2):
        rows = p.states.best_rows(n)
        for i, want in ((1, (1, 0)), (2, (0, 1))):
            u = p.u(i, n)
            for row, w in zip(rows, want):
                val = sum((iv * c for iv, c in zip(row, u)), core.RatInterval.point(0))
                assert val.contains(w)


def test_flattened_presentation_validates():
    p = flatten(*generate(GenSpec(seed=2, levels=4, j_max=1)))
    assert validate(p).passed
