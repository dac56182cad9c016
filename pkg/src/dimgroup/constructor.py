"""Factoring a two-state presentation into a block diagram.

A stage starts at a level ``n`` with boundary vectors ``v1, v2`` and the
canonical map ``gamma = gamma_n``.  It

1. splits ``gamma = gamma^1 + gamma^2`` with ``gamma^j`` landing in the cone
   ``G(l, j)`` on a finite list of test vectors,
2. factors each ``gamma^j`` as ``eta^j o B^j`` through ``Z^J`` with ``eta^j``
   taking values in ``G(l, j)`` and ``B^j`` positive on the tests,
3. rescales ``B^j`` so that ``B^j w^j`` sits in the window ``[lK, s l K]``,
4. pushes ``eta^j`` to a later level ``n~`` where they become integer
   matrices ``C^j`` with ``C^1 B^1 + C^2 B^2 = A_{n~-1} ... A_n``.

Consecutive stages glue into block matrices ``B^i_{k+1} C^j_k``.  Every
stage result is checked before it is used; the checks are collected as
replayable report items.

The cone and lattice searches work in two-dimensional levels
(``I_n = 2``), where group elements at a fixed level are integer vectors
and the states are injective.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import prod

from . import core
from .cones import (
    TestSets,
    contains_enclosure,
    derived_test_sets,
    dual_basis,
    min_margin,
    project,
)
from .core import RatInterval, ceil_div, ceil_rat, floor_rat, lcm, rat
from .diagram import GroupElement, Presentation, combination, push, sigma_best
from .errors import (
    EntryTooSmall,
    Exhaustion,
    Infeasible,
    InvalidInput,
    LevelExhausted,
    NoSolution,
    NoWindow,
    SearchExhausted,
    ShapeMismatch,
)
from .report import Report, ReportItem, compare, merge, sort_items
from .verifier import (
    BlockDiagram,
    BlockLevel,
    ParamSchedule,
    check_all,
    check_iteration_bounds,
    replay,
)


# ---------------------------------------------------------------- configuration


@dataclass(frozen=True)
class SearchLimits:
    max_level: int | None = None
    max_precision: int = 1 << 20
    max_candidates: int = 64
    max_nodes: int = 200000
    max_steps: int = 100000


@dataclass(frozen=True)
class PipelineConfig:
    """Target schedules and search limits for :func:`run_pipeline`.

    ``r`` must be strictly decreasing in ``(1, 2)``; ``a`` lists the lower
    bounds for the off-diagonal blocks of each produced connecting level.
    """

    r: tuple
    a: tuple = ()
    stages: int | None = None
    start_level: int = 1
    max_level: int | None = None
    max_precision: int = 1 << 20
    max_candidates: int = 64

    def __post_init__(self):
        r = tuple(rat(x) for x in self.r)
        a = tuple(int(x) for x in self.a)
        stages = len(r) if self.stages is None else int(self.stages)
        if stages < 1:
            raise InvalidInput("at least one stage is needed")
        if len(r) < stages:
            raise InvalidInput(f"r-schedule has {len(r)} values, {stages} stages requested")
        for x in r:
            if not 1 < x < 2:
                raise InvalidInput(f"r values must lie in (1, 2), got {x}")
        if any(b >= c for c, b in zip(r, r[1:])):
            raise InvalidInput("r-schedule must be strictly decreasing")
        if stages > 1 and len(a) < stages - 1:
            raise InvalidInput(f"a-schedule needs {stages - 1} values")
        if any(x < 1 for x in a):
            raise InvalidInput("a values must be positive integers")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "stages", stages)

    @property
    def limits(self) -> SearchLimits:
        return SearchLimits(self.max_level, self.max_precision, self.max_candidates)


# ---------------------------------------------------------------- result types


@dataclass(frozen=True)
class SplitResult:
    l: int
    s1: tuple
    s2: tuple
    gamma1_gens: tuple
    gamma2_gens: tuple
    tests: TestSets
    m: int = 0
    level: int = 0
    items: tuple = ()


@dataclass(frozen=True)
class ConeFactorization:
    eta_gens: tuple
    B: tuple
    l: int = 0
    side: int = 1
    gens: tuple = ()
    tests: tuple = ()
    unit: tuple | None = None
    items: tuple = ()

    @property
    def J(self) -> int:
        return len(self.B)


@dataclass(frozen=True)
class StageRecord:
    index: int
    level: int
    next_level: int
    m: int
    l: int
    K: int
    B1: tuple
    B2: tuple
    C1: tuple
    C2: tuple
    items: tuple


@dataclass(frozen=True)
class CertBundle:
    stages: tuple
    final: Report
    iteration: tuple = ()
    notes: tuple = field(default_factory=tuple)

    def all_items(self):
        for st in self.stages:
            yield from st.items
        for rep in self.iteration:
            yield from rep.items
        yield from self.final.items

    def replay(self) -> bool:
        """Re-evaluate every stored comparison and confirm its verdict."""
        return all(replay(item) for item in self.all_items())

    @property
    def passed(self) -> bool:
        return all(item.ok for item in self.all_items())


# ---------------------------------------------------------------- small helpers


def _cross(a, b) -> int:
    return a[0] * b[1] - a[1] * b[0]


def _vadd(a, b, k: int = 1):
    return tuple(x + k * y for x, y in zip(a, b))


def _as_box(col):
    x, y = col
    if not isinstance(x, RatInterval):
        x = RatInterval.point(rat(x))
    if not isinstance(y, RatInterval):
        y = RatInterval.point(rat(y))
    return x, y


def _top(p, limits: SearchLimits) -> int:
    top = p.diagram.levels
    if limits.max_level is not None:
        top = min(top, limits.max_level)
    return top


def _in_cone(p: Presentation, e: GroupElement, l: int, side: int) -> bool:
    if not any(e.vector):
        return False
    return contains_enclosure(l, side, sigma_best(p, e)) is True


def _cone_item(cond, level, indices, p, e, l, side) -> ReportItem:
    """Membership of a nonzero element as ``0 < (smallest certified margin)``."""
    if not any(e.vector):
        return compare(cond, level, indices, 0, 0, "<")
    return compare(cond, level, indices, 0, min_margin(l, side, sigma_best(p, e)), "<")


def _require(items, what: str, exc=SearchExhausted):
    bad = [it for it in items if not it.ok]
    if bad:
        it = bad[0]
        raise exc(f"{what}: {it.condition} fails at {it.indices}", condition=it.condition, indices=it.indices)


def _bits(q) -> int:
    """Rough base-2 logarithm of a positive rational."""
    q = rat(q)
    return q.numerator.bit_length() - q.denominator.bit_length()


# ---------------------------------------------------------------- scalar rules


def k_threshold(v, s) -> int:
    """Smallest integer strictly above ``2 prod(v) / (s - 1)``."""
    v = [int(x) for x in v]
    s = rat(s)
    if not v or any(x < 1 for x in v):
        raise InvalidInput("v must have entries >= 1")
    if s <= 1:
        raise InvalidInput("s must exceed 1")
    return floor_rat(2 * prod(v) / (s - 1)) + 1


def split_refine(A, v, s, K):
    """Refine ``A`` (``I x J``) through the window ``[K, sK]``.

    Returns ``(A', B, N)`` with ``A' B = A`` and ``B v = (N, .., N, N + v)``.
    """
    A = core.as_mat(A)
    v = tuple(int(x) for x in v)
    s, K = rat(s), int(K)
    J = len(v)
    if any(len(row) != J for row in A):
        raise ShapeMismatch(f"A must have {J} columns")
    if any(x < 1 for x in v):
        raise InvalidInput("v must have entries >= 1")
    P = prod(v)
    N = ceil_div(K, P) * P
    if N + P > s * K:
        raise NoWindow(f"no two consecutive multiples of {P} in [{K}, {s * K}]")
    d = [N // x for x in v]
    Ap = []
    for i, row in enumerate(A):
        left, right = [], []
        for j, a in enumerate(row):
            q = d[j] * d[j]
            Q = (a - 1) // q
            R = a - Q * q
            if Q < 1 or Q * d[j] - R < 0:
                raise EntryTooSmall(
                    f"A({i + 1},{j + 1}) = {a} is below the split threshold for N/v = {d[j]}"
                )
            left.append(Q * d[j] - R)
            right.append(R)
        Ap.append(tuple(left + right))
    B = tuple(tuple(d[j] if k == j else 0 for k in range(J)) for j in range(J)) + tuple(
        tuple(d[j] + 1 if k == j else 0 for k in range(J)) for j in range(J)
    )
    assert core.mat_mul(Ap, B) == core.as_mat(A)
    return tuple(Ap), B, N


def _l_feasible(boxes, m: int, l: int) -> bool:
    s = 1 + Fraction(1, m)
    h = dual_basis(l)
    for x, y in boxes:
        for own, hj in ((x, h[0]), (y, h[1])):
            c = x * hj[0] + y * hj[1]
            if not (c.lo > 0 and c.hi < Fraction(1, m)):
                return False
            lc = c * l
            if not ((own * (1 / s)).hi < lc.lo and lc.hi < (own * s).lo):
                return False
    return True


def choose_l(sigma_cols, m: int, l0: int, cap: int | None = None) -> int:
    """Smallest ``l >= l0`` with ``s^-1 sigma_j < l (sigma . h^j) < s sigma_j`` and ``0 < sigma . h^j < 1/m``.

    Columns may be exact pairs or pairs of enclosures (then the inequalities
    must hold on the whole box).  All conditions hold for large ``l``; past a
    linear scan the search gallops and bisects, then confirms ``l - 1`` fails.
    """
    if m < 2:
        raise InvalidInput("m must be >= 2")
    boxes = [_as_box(c) for c in sigma_cols]
    for x, y in boxes:
        if x.lo <= 0 or y.lo <= 0:
            raise InvalidInput("state columns must be strictly positive")
    l = max(int(l0), 2)
    limit = cap if cap is not None else None
    for _ in range(4096):
        if limit is not None and l > limit:
            raise SearchExhausted(f"no admissible l up to {limit}", cap=limit)
        if _l_feasible(boxes, m, l):
            return l
        l += 1
    lo = l - 1  # known infeasible
    step = 1
    while True:
        hi = lo + step
        if limit is not None and hi > limit:
            hi = limit
            if not _l_feasible(boxes, m, hi):
                raise SearchExhausted(f"no admissible l up to {limit}", cap=limit)
        if _l_feasible(boxes, m, hi):
            break
        lo, step = hi, step * 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _l_feasible(boxes, m, mid):
            hi = mid
        else:
            lo = mid
    return hi


def multiplier(x, s) -> int:
    """Smallest positive integer ``k`` with ``1 < k x < s`` (``x`` exact or an enclosure)."""
    box = x if isinstance(x, RatInterval) else RatInterval.point(rat(x))
    s = rat(s)
    if box.lo <= 0:
        raise Infeasible(f"multiplier needs a positive value, got {box}")
    k = floor_rat(1 / box.lo) + 1
    if not k * box.hi < s:
        raise Infeasible(f"no integer k with 1 < k x < {s} for x in {box}")
    return k


def choose_multipliers(sigma_cols, l: int, s):
    """Per column, the smallest integers with ``1 < s^j(i) (sigma_i . h^j) < s``."""
    h = dual_basis(l)
    s1, s2 = [], []
    for col in sigma_cols:
        x, y = _as_box(col)
        s1.append(multiplier(x * h[0][0] + y * h[0][1], s))
        s2.append(multiplier(x * h[1][0] + y * h[1][1], s))
    return tuple(s1), tuple(s2)


def deep_representation(p, xs, n: int, max_level: int | None = None):
    """Level ``m'`` and matrix ``A`` whose columns represent ``xs`` with all entries ``>= n``."""
    from .diagram import _diagram_of, common_level

    d = _diagram_of(p)
    if n < 1:
        raise InvalidInput("n must be >= 1")
    top = d.levels if max_level is None else min(max_level, d.levels)
    elems = common_level(d, *xs)
    level = elems[0].level
    vecs = [e.vector for e in elems]
    while True:
        if all(min(v) >= n for v in vecs):
            return level, tuple(tuple(v[i] for v in vecs) for i in range(len(vecs[0])))
        if level >= top:
            raise LevelExhausted(f"entries stay below {n} up to level {top}", level=level)
        vecs = [core.mat_vec(d.matrices[level - 1], v) for v in vecs]
        level += 1


# ---------------------------------------------------------------- splitting


def _split_items(m, l, w1, w2, tests: TestSets, I):
    """Linear families whose values must lie in the cones.

    Each entry is ``(side, name, index, coeffs, const, uses_sigma)``: the value
    is ``sum coeffs[i] q_i + const`` on side 1 and
    ``sum coeffs[i] (sigma_i - q_i) + const`` on side 2.
    """
    out = []
    for k, f in enumerate(tests.F1):
        out.append((1, "split.F1", k + 1, f, (0, 0)))
    for k, f in enumerate(tests.F2):
        out.append((2, "split.F2", k + 1, f, (0, 0)))
    for i in range(I):
        e = tuple(int(i == k) for k in range(I))
        out.append((1, "split.col1", i + 1, e, (0, 0)))
        out.append((2, "split.col2", i + 1, e, (0, 0)))
    for side, w, r in ((1, w1, (l, 1)), (2, w2, (1, l))):
        out.append((side, f"split.unit{side}", "lo", tuple((m + 1) * x for x in w), (-m * r[0], -m * r[1])))
        out.append((side, f"split.unit{side}", "hi", tuple(-m * x for x in w), ((m + 1) * r[0], (m + 1) * r[1])))
    return out


def _split_tolerance(items, l, sig_mid, targets):
    tol = None
    for side, _, _, coeffs, const in items:
        if side == 1:
            vals = targets
        else:
            vals = [(a[0] - b[0], a[1] - b[1]) for a, b in zip(sig_mid, targets)]
        x = sum(c * v[0] for c, v in zip(coeffs, vals)) + const[0]
        y = sum(c * v[1] for c, v in zip(coeffs, vals)) + const[1]
        from .cones import cone_slacks

        margin = min(cone_slacks(l, side, (x, y)))
        if margin <= 0:
            return Fraction(0)
        weight = sum(abs(c) for c in coeffs) * (l + 2)
        t = margin / weight
        tol = t if tol is None else min(tol, t)
    return tol


def _lattice_point(rows, target, bits: int):
    """Integer ``z`` whose image under the (rounded) state rows is near ``target``."""
    D = 1 << bits
    P = [[core.round_half_down(iv.mid * D) for iv in row] for row in rows]
    T = (core.round_half_down(rat(target[0]) * D), core.round_half_down(rat(target[1]) * D))
    basis = core.column_lattice_basis(P)
    if len(basis) != 2:
        return None
    pt = core.closest_point(basis, T)
    z = core.solve_diophantine(P, pt)
    if z is NoSolution:
        return None
    return z


def _dist(rows, z, target) -> Fraction:
    est = [sum(iv.mid * c for iv, c in zip(row, z)) for row in rows]
    return max(abs(est[0] - rat(target[0])), abs(est[1] - rat(target[1])))


def split_positive_map(p: Presentation, n: int, v1, v2, m: int, l0: int, limits: SearchLimits = SearchLimits()):
    """Split ``gamma_n`` into two maps with values in ``G(l,1)`` and ``G(l,2)`` on the tests."""
    I = p.diagram.size(n)
    gens = [p.generator(n, i) for i in range(I)]
    sig = [sigma_best(p, g) for g in gens]
    s = 1 + Fraction(1, m)
    l = choose_l(sig, m, l0)
    s1, s2 = choose_multipliers(sig, l, s)
    tests = derived_test_sets(v1, v2, s1, s2, m, l)
    w1 = tuple(l * a + b for a, b in zip(v1, v2))
    w2 = tuple(a + l * b for a, b in zip(v1, v2))
    mids = [(a.mid, b.mid) for a, b in sig]
    targets = [project(l, 1, c) for c in mids]
    items = _split_items(m, l, w1, w2, tests, I)
    tol = _split_tolerance(items, l, mids, targets)
    if not tol:
        raise SearchExhausted("state enclosures too wide to place the split targets", level=n)
    top = _top(p, limits)
    best = None
    for M in range(n, min(top, p.states.max_level) + 1):
        rows = p.states.best_rows(M)
        scale = min(min(abs(iv.mid) for iv in row if iv.mid) for row in rows)
        size = max(abs(t) for tgt in targets for t in tgt)
        bits = max(64, _bits(size / (scale * tol)) + 40)
        if bits > limits.max_precision:
            break
        zs = []
        for tgt in targets:
            z = _lattice_point(rows, tgt, bits)
            if z is None:
                break
            zs.append(z)
        else:
            dist = max(_dist(rows, z, t) for z, t in zip(zs, targets))
            best = dist if best is None else min(best, dist)
            if dist > tol / 2:
                continue
            g1 = tuple(GroupElement(M, z) for z in zs)
            g2 = tuple(
                GroupElement(M, core.vec_sub(push(p, e, M).vector, z)) for e, z in zip(gens, zs)
            )
            checks = _check_split(p, n, M, l, m, g1, g2, gens, w1, w2, items)
            if all(it.ok for it in checks):
                return SplitResult(l, s1, s2, g1, g2, tests, m, n, tuple(checks))
    raise SearchExhausted(
        f"no split found from level {n} (tolerance {float(tol):.3g}, best distance "
        f"{'none' if best is None else format(float(best), '.3g')})",
        level=n,
        best_distance=best,
        tolerance=tol,
    )


def _check_split(p, n, M, l, m, g1, g2, gens, w1, w2, items):
    out = []
    for i, (a, b, e) in enumerate(zip(g1, g2, gens)):
        total = combination(p, (1, 1), (a, b))
        out.append(compare("split.sum", n, (i + 1,), total.vector, push(p, e, total.level).vector, "=="))
    U1 = core.vec_add(tuple(l * x for x in p.u(1, M)), p.u(2, M))
    U2 = core.vec_add(p.u(1, M), tuple(l * x for x in p.u(2, M)))
    for side, name, idx, coeffs, const in items:
        g = g1 if side == 1 else g2
        e = combination(p, coeffs, g)
        if const != (0, 0):
            # the constant is a multiple of the side's order unit at level M
            U = U1 if side == 1 else U2
            c = const[0] // (l if side == 1 else 1)
            e = GroupElement(M, core.vec_add(e.vector, tuple(c * x for x in U)))
        out.append(_cone_item(name, n, (idx,), p, e, l, side))
    return out


# ---------------------------------------------------------------- planar frames


def _first_true(pred, lo: int, hi: int):
    """Smallest ``j`` in ``[lo, hi]`` with ``pred(j)`` for a monotone predicate."""
    if not pred(hi):
        return None
    while lo < hi:
        mid = (lo + hi) // 2
        if pred(mid):
            hi = mid
        else:
            lo = mid + 1
    return lo


def _max_advance(base, step, cluster, sign: int) -> int:
    """Largest ``k >= 0`` with every cluster vector strictly on one side of ``base + k step``.

    ``sign = 1``: vectors counterclockwise of the ray; ``sign = -1``: clockwise.
    """
    k = None
    for v in cluster:
        a = sign * _cross(base, v)
        b = -sign * _cross(step, v)
        if a <= 0:
            return -1
        if b <= 0:
            continue
        bound = ceil_div(a, b) - 1
        k = bound if k is None else min(k, bound)
    return k if k is not None else 1 << 62


def _pinned(base, pivot, part, in_cone, sign: int, tight: bool = False):
    """``base + j pivot`` in the cone, still strictly outside ``part`` (a side of ``pivot``).

    The smallest admissible ``j`` by default, the largest when ``tight``.
    """
    if part:
        jmax = _max_advance(base, pivot, part, sign)
        if jmax < 0:
            return None
    else:
        jmax = 1
        while not in_cone(_vadd(base, pivot, jmax)):
            jmax *= 2
            if jmax > 1 << 62:
                return None
    if tight and part:
        cand = _vadd(base, pivot, jmax)
        return cand if in_cone(cand) else None
    j = _first_true(lambda j: in_cone(_vadd(base, pivot, j)), 0, jmax)
    return None if j is None else _vadd(base, pivot, j)


def bracket(cluster, in_cone, max_steps: int = 100000, tight: bool = False):
    """Unimodular frame of cone vectors around a cluster of planar integer vectors.

    Returns ``[L, R]`` (``cross(L, R) = 1``) or ``[L, c, R]`` (``cross(L, c) =
    cross(c, R) = 1``) with every frame vector accepted by ``in_cone`` and every
    cluster vector strictly between the outer two.  Stern-Brocot descent with
    continued-fraction jumps; when a mediant splits the cluster it becomes the
    middle vector.  By default the descent stops at the first frame inside the
    cone (wide frames); with ``tight`` it runs until a mediant splits the
    cluster and hugs the cluster on both sides.  Returns None when no frame is
    found.
    """
    cluster = [tuple(v) for v in cluster if any(v)]
    if not cluster:
        return None
    start = None
    for L, R in (((1, 0), (0, 1)), ((0, 1), (-1, 0)), ((-1, 0), (0, -1)), ((0, -1), (1, 0))):
        if all(_cross(L, v) > 0 and _cross(v, R) > 0 for v in cluster):
            start = (L, R, None)
            break
    if start is None:
        for c in ((1, 0), (0, 1), (-1, 0), (0, -1)):
            L, R = (c[1], -c[0]), (-c[1], c[0])
            if all(_cross(L, v) > 0 and _cross(v, R) > 0 for v in cluster):
                start = (L, R, c)
                break
    if start is None:
        return None
    L, R, c = start
    steps = 0
    while c is None:
        steps += 1
        if steps > max_steps:
            return None
        inL, inR = (False, False) if tight else (in_cone(L), in_cone(R))
        if inL and inR:
            return [L, R]
        kL = _max_advance(L, R, cluster, 1)
        if kL >= 1:
            if inR:
                j = _first_true(lambda j: in_cone(_vadd(L, R, j)), 1, kL)
                if j is not None:
                    return [_vadd(L, R, j), R]
            L = _vadd(L, R, kL)
            cand = _vadd(L, R)
            if all(_cross(v, cand) > 0 for v in cluster):
                R = cand
            else:
                c = cand
            continue
        kR = _max_advance(R, L, cluster, -1)
        if kR >= 1:
            if inL:
                j = _first_true(lambda j: in_cone(_vadd(R, L, j)), 1, kR)
                if j is not None:
                    return [L, _vadd(R, L, j)]
            R = _vadd(R, L, kR)
            cand = _vadd(R, L)
            if all(_cross(cand, v) > 0 for v in cluster):
                L = cand
            else:
                c = cand
            continue
        c = _vadd(L, R)
    if not in_cone(c):
        return None
    left = [v for v in cluster if _cross(c, v) < 0]
    right = [v for v in cluster if _cross(c, v) > 0]
    L2 = _pinned(L, c, left, in_cone, 1, tight)
    R2 = _pinned(R, c, right, in_cone, -1, tight)
    if L2 is None or R2 is None:
        return None
    return [L2, c, R2]


def frame_coordinates(frame, x):
    """Coordinates of ``x`` in the basis ``(frame[0], frame[1])``."""
    a, b = frame[0], frame[1]
    det = _cross(a, b)
    return (_cross(x, b) // det, _cross(a, x) // det)


def _frame_q(frame) -> int:
    return _cross(frame[0], frame[2])


# ---------------------------------------------------------------- cone factorization


def _factor_matrix(frame, cols, tests, unit, max_nodes):
    """Positive ``B`` (frame size x columns) with ``B f >= 0`` on tests and ``B unit >= 1``."""
    I = len(cols)
    coords = [frame_coordinates(frame, x) for x in cols]
    if len(frame) == 2:
        B = tuple(tuple(c[k] for c in coords) for k in range(2))
    else:
        q = _frame_q(frame)
        bounds = []
        for al, be in coords:
            bounds.append((max(1, 1 - al), floor_rat(Fraction(be - 1, q))))
        if any(a > b for a, b in bounds):
            return None
        cons = []

        def span(f):
            al = sum(fi * c[0] for fi, c in zip(f, coords))
            be = sum(fi * c[1] for fi, c in zip(f, coords))
            return al, be

        for f in tests:
            al, be = span(f)
            cons.append((tuple(f), max(0, -al), Fraction(be, q)))
        if unit is not None:
            al, be = span(unit)
            cons.append((tuple(unit), max(1, 1 - al), Fraction(be - 1, q)))
        t = core.branch_and_prune(cons, bounds, max_nodes)
        if t is NoSolution:
            return None
        B = (
            tuple(c[0] + ti for c, ti in zip(coords, t)),
            tuple(c[1] - q * ti for c, ti in zip(coords, t)),
            tuple(t),
        )
    if any(x < 1 for row in B for x in row):
        return None
    return B


def verify_factorization(p, cf: ConeFactorization, level: int = 0):
    """Report items for the three factorization invariants."""
    out = []
    for i, g in enumerate(cf.gens):
        col = [row[i] for row in cf.B]
        e = combination(p, col, cf.eta_gens)
        lvl = max(e.level, g.level)
        out.append(
            compare(f"factor{cf.side}.identity", level, (i + 1,), push(p, e, lvl).vector, push(p, g, lvl).vector, "==")
        )
    for j, row in enumerate(cf.B):
        for i, x in enumerate(row):
            out.append(compare(f"factor{cf.side}.positive", level, (j + 1, i + 1), 1, x))
    for k, f in enumerate(cf.tests):
        for j, x in enumerate(core.mat_vec(cf.B, f)):
            out.append(compare(f"factor{cf.side}.tests", level, (k + 1, j + 1), 0, x))
    if cf.unit is not None:
        for j, x in enumerate(core.mat_vec(cf.B, cf.unit)):
            out.append(compare(f"factor{cf.side}.unit", level, (j + 1,), 1, x))
    for j, e in enumerate(cf.eta_gens):
        out.append(_cone_item(f"factor{cf.side}.cone", level, (j + 1,), p, e, cf.l, cf.side))
    return out


def cone_factor(p, gens, tests, l: int, side: int, limits: SearchLimits = SearchLimits(), unit=None,
                level_tag: int = 0) -> ConeFactorization:
    """Factor ``gens`` as ``eta o B`` with ``eta`` valued in ``G(l, side)`` and ``B`` positive on ``tests``."""
    gens = tuple(gens)
    tests = tuple(tuple(int(x) for x in f) for f in tests)
    start = max(g.level for g in gens)
    top = _top(p, limits)
    last = "no level tried"
    for M in range(start, top + 1):
        if p.diagram.size(M) != 2:
            last = f"level {M} is not two-dimensional"
            continue
        cols = [push(p, g, M).vector for g in gens]
        images = [combination(p, f, [GroupElement(M, c) for c in cols]).vector for f in tests]
        if any(not any(v) for v in images):
            raise SearchExhausted("a test vector maps to zero", level=M)

        def inC(v, M=M):
            return _in_cone(p, GroupElement(M, v), l, side)

        frame = bracket(cols + images, inC, limits.max_steps, tight=True)
        if frame is None:
            last = f"no cone frame at level {M}"
            continue
        B = _factor_matrix(frame, cols, tests, unit, limits.max_nodes)
        if B is None:
            last = f"no positive coefficient matrix at level {M}"
            continue
        eta = tuple(GroupElement(M, y) for y in frame)
        cf = ConeFactorization(eta, B, l, side, gens, tests, None if unit is None else tuple(unit))
        checks = verify_factorization(p, cf, level_tag)
        if all(it.ok for it in checks):
            return ConeFactorization(eta, B, l, side, gens, tests, cf.unit, tuple(checks))
        last = f"verification failed at level {M}"
    raise SearchExhausted(f"cone factorization failed ({last})", stage="cone_factor", side=side, reason=last)


def _halve(p, y: GroupElement, l, side, top):
    for M in range(y.level + 1, top + 1):
        v = push(p, y, M).vector
        g = tuple(x // 2 for x in v)
        h = core.vec_sub(v, g)
        if _in_cone(p, GroupElement(M, g), l, side) and _in_cone(p, GroupElement(M, h), l, side):
            return GroupElement(M, g), GroupElement(M, h)
    return None


def equalize_rows(cf_a: ConeFactorization, cf_b: ConeFactorization, p, limits: SearchLimits = SearchLimits(),
                  level_tag: int = 0):
    """Pad the factorization with fewer rows by splitting its last generator."""
    top = _top(p, limits)
    out = []
    for cf, other in ((cf_a, cf_b), (cf_b, cf_a)):
        while cf.J < other.J:
            pair = _halve(p, cf.eta_gens[-1], cf.l, cf.side, top)
            if pair is None:
                raise SearchExhausted("no smaller cone element to split the last generator", side=cf.side)
            eta = cf.eta_gens[:-1] + pair
            B = cf.B + (cf.B[-1],)
            cf = ConeFactorization(eta, B, cf.l, cf.side, cf.gens, cf.tests, cf.unit)
            checks = verify_factorization(p, cf, level_tag)
            _require(checks, "padded factorization")
            cf = ConeFactorization(eta, B, cf.l, cf.side, cf.gens, cf.tests, cf.unit, tuple(checks))
        out.append(cf)
    return out[0], out[1]


def cone_deep_representation(p, xs, l: int, side: int, need, limits: SearchLimits = SearchLimits()):
    """Elements ``y_i`` of ``G(l, side)`` and ``A`` with ``x_j = sum_i A(i,j) y_i``, ``A(i,j) >= need[j]``."""
    start = max(x.level for x in xs) + 1
    top = _top(p, limits)
    for M in range(start, top + 1):
        if p.diagram.size(M) != 2:
            continue
        vecs = [push(p, x, M).vector for x in xs]

        def inC(v, M=M):
            return _in_cone(p, GroupElement(M, v), l, side)

        frame = bracket(vecs, inC, limits.max_steps)
        if frame is None:
            continue
        cols = []
        for v, n in zip(vecs, need):
            al, be = frame_coordinates(frame, v)
            if len(frame) == 2:
                col = (al, be)
            else:
                q = _frame_q(frame)
                t = max(n, n - al)
                col = (al + t, be - q * t, t)
            if min(col) < n:
                break
            cols.append(col)
        else:
            ys = tuple(GroupElement(M, y) for y in frame)
            A = tuple(tuple(c[i] for c in cols) for i in range(len(frame)))
            for j, v in enumerate(vecs):
                got = combination(p, [row[j] for row in A], ys).vector
                if got != v:
                    raise AssertionError("frame coordinates do not reproduce the element")
            return ys, A
    raise LevelExhausted(f"no cone representation with large coefficients up to level {top}", level=top)


def _scale_floor(sigma_cols, side, s, a, K_floor, l, v, mult):
    K = max(int(K_floor), 1)
    for box in sigma_cols:
        lo = box[side - 1].lo
        K = max(K, ceil_rat(s * s * a / lo), ceil_rat(Fraction(9 * a, 8) / lo))
    K = max(K, ceil_div(k_threshold(v, s), l))
    return ceil_div(K, mult) * mult


def normalize_scale(cf: ConeFactorization, w, s, l: int, a: int, K_floor: int, p, *, sigma_cols,
                    v_own=None, v_other=None, multiple_of: int | None = None,
                    limits: SearchLimits = SearchLimits(), level_tag: int = 0):
    """Refine ``cf`` so that ``B w`` lies in ``[lK, s l K]``; returns ``(cf', K)``.

    ``K`` is the least multiple of ``multiple_of`` (default ``l``) that is at
    least ``K_floor`` and clears ``K sigma_j(gamma(eps_i)) >= s^2 a`` and the
    refinement threshold.
    """
    s = rat(s)
    side = cf.side
    mult = l if multiple_of is None else multiple_of
    if mult % l:
        raise InvalidInput("the scale must be a multiple of l")
    v = core.mat_vec(cf.B, w)
    if any(x < 1 for x in v):
        raise InvalidInput("B w must have entries >= 1")
    K = _scale_floor(sigma_cols, side, s, a, K_floor, l, v, mult)
    P = prod(v)
    N = ceil_div(l * K, P) * P
    need = []
    for x in v:
        d = N // x
        need.append(d ** 3 + d ** 2 + 1)
    ys, A = cone_deep_representation(p, cf.eta_gens, l, side, need, limits)
    Ap, Bp, _ = split_refine(A, v, s, l * K)
    eta = tuple(combination(p, [row[k] for row in Ap], ys) for k in range(len(Bp)))
    B = core.mat_mul(Bp, cf.B)
    out = ConeFactorization(eta, tuple(tuple(r) for r in B), l, side, cf.gens, cf.tests, cf.unit)
    checks = verify_factorization(p, out, level_tag)
    checks += scale_items(out, w, s, l, K, a, sigma_cols, v_own, v_other, level_tag)
    _require(checks, "rescaled factorization")
    return ConeFactorization(eta, out.B, l, side, cf.gens, cf.tests, cf.unit, tuple(checks)), K


def scale_items(cf, w, s, l, K, a, sigma_cols, v_own=None, v_other=None, level: int = 0):
    """Window, entry and boundary-vector bounds for a rescaled factorization."""
    side = cf.side
    tag = f"scale{side}"
    out = [compare(f"{tag}.multiple", level, ("K mod l",), K % l, 0, "==")]
    for j, x in enumerate(core.mat_vec(cf.B, w)):
        out.append(compare(f"{tag}.window", level, (j + 1, "lo"), l * K, x))
        out.append(compare(f"{tag}.window", level, (j + 1, "hi"), x, s * l * K))
    for j, row in enumerate(cf.B):
        for i, x in enumerate(row):
            box = sigma_cols[i][side - 1]
            out.append(compare(f"{tag}.entries", level, (j + 1, i + 1, "lo"), K * box.hi / (s * s), x))
            out.append(compare(f"{tag}.entries", level, (j + 1, i + 1, "hi"), x, s ** 3 * K * box.lo))
            out.append(compare(f"{tag}.a", level, (j + 1, i + 1), a, x))
    if v_own is not None:
        for j, x in enumerate(core.mat_vec(cf.B, v_own)):
            out.append(compare(f"{tag}.own", level, (j + 1, "lo"), K, x))
            out.append(compare(f"{tag}.own", level, (j + 1, "hi"), x, s * s * K))
    if v_other is not None:
        for j, x in enumerate(core.mat_vec(cf.B, v_other)):
            out.append(compare(f"{tag}.other", level, (j + 1, "lo"), K / (s * s), -l * x))
            out.append(compare(f"{tag}.other", level, (j + 1, "hi"), -l * x, s ** 3 * K))
    return out


# ---------------------------------------------------------------- closing


def close_factorization(p, eta1_gens, eta2_gens, B1, B2, n: int, limits: SearchLimits = SearchLimits(), *,
                        s=None, l: int | None = None, v1=None, v2=None, level_tag: int = 0):
    """Level ``n~ > n`` where the generators become positive matrices ``C^1, C^2``.

    Checks ``C^1 B^1 + C^2 B^2 = A_{n~-1} ... A_n`` and, when ``s, l, v1, v2``
    are given, ``s^-1 (l u^1 + u^2) <= C^1 B^1 (l v^1 + v^2) <= s (l u^1 + u^2)``
    at level ``n~`` and its mirror image.  Returns ``(n~, C1, C2, items)``.
    """
    d = p.diagram
    top = _top(p, limits)
    start = max([n + 1] + [e.level for e in tuple(eta1_gens) + tuple(eta2_gens)])
    if start > top:
        raise LevelExhausted(f"prefix ends at level {top}, generators need level {start}", level=start)
    prod_m = core.identity(d.size(n))
    for k in range(n, start):
        prod_m = core.mat_mul(d.matrix(k), prod_m)
    first_fail = None
    for nt in range(start, top + 1):
        if nt > start:
            prod_m = core.mat_mul(d.matrix(nt - 1), prod_m)
        C1 = _columns(p, eta1_gens, nt)
        C2 = _columns(p, eta2_gens, nt)
        items = []
        for name, C in (("close.C1", C1), ("close.C2", C2)):
            for i, row in enumerate(C):
                for j, x in enumerate(row):
                    items.append(compare(name, level_tag, (i + 1, j + 1), 1, x))
        lhs = core.mat_add(core.mat_mul(C1, B1), core.mat_mul(C2, B2))
        items.append(compare("close.identity", level_tag, (nt,), lhs, prod_m, "=="))
        if s is not None:
            s = rat(s)
            U1 = core.vec_add(tuple(l * x for x in p.u(1, nt)), p.u(2, nt))
            U2 = core.vec_add(p.u(1, nt), tuple(l * x for x in p.u(2, nt)))
            w1 = core.vec_add(tuple(l * x for x in v1), v2)
            w2 = core.vec_add(v1, tuple(l * x for x in v2))
            x1 = core.mat_vec(C1, core.mat_vec(B1, w1))
            x2 = core.mat_vec(C2, core.mat_vec(B2, w2))
            for name, x, U in (("close.sandwich1", x1, U1), ("close.sandwich2", x2, U2)):
                for k, (a, b) in enumerate(zip(x, U)):
                    items.append(compare(name, level_tag, (k + 1, "lo"), b / s, a))
                    items.append(compare(name, level_tag, (k + 1, "hi"), a, s * b))
        if all(it.ok for it in items):
            return nt, C1, C2, tuple(items)
        if first_fail is None:
            bad = next(it for it in items if not it.ok)
            first_fail = (nt, bad.condition, bad.indices)
    raise LevelExhausted(
        f"factorization does not close up to level {top} (first failure {first_fail})",
        level=top,
        first_failure=first_fail,
    )


def _columns(p, gens, level):
    cols = [push(p, e, level).vector for e in gens]
    return tuple(tuple(c[i] for c in cols) for i in range(len(cols[0])))


# ---------------------------------------------------------------- pipeline


def _stage_m(r, r_prev, m_floor: int) -> int:
    """Smallest ``m >= m_floor`` with ``(1+1/m)^3 < r`` and ``(1+1/m)^9 < r_prev``."""
    m = max(2, m_floor)

    def ok(m):
        s = 1 + Fraction(1, m)
        return s ** 3 < r and (r_prev is None or s ** 9 < r_prev)

    step = 1
    while not ok(m + step - 1):
        step *= 2
    lo, hi = m, m + step - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid + 1
    return lo


def _stage(p, k, n, m, l0, a, K_floor, mult_of, limits):
    """One stage of the construction starting at level ``n``."""
    v1, v2 = p.u(1, n), p.u(2, n)
    s = 1 + Fraction(1, m)
    split = split_positive_map(p, n, v1, v2, m, l0, limits)
    l = split.l
    w1 = tuple(l * x + y for x, y in zip(v1, v2))
    w2 = tuple(x + l * y for x, y in zip(v1, v2))
    I = p.diagram.size(n)
    sig = [sigma_best(p, p.generator(n, i)) for i in range(I)]
    cf1 = cone_factor(p, split.gamma1_gens, split.tests.F1, l, 1, limits, unit=w1, level_tag=k)
    cf2 = cone_factor(p, split.gamma2_gens, split.tests.F2, l, 2, limits, unit=w2, level_tag=k)
    cf1, cf2 = equalize_rows(cf1, cf2, p, limits, level_tag=k)
    mult = lcm(l, mult_of)
    K = int(K_floor)
    for _ in range(8):
        n1, K1 = normalize_scale(cf1, w1, s, l, a, K, p, sigma_cols=sig, v_own=v1, v_other=v2,
                                 multiple_of=mult, limits=limits, level_tag=k)
        n2, K2 = normalize_scale(cf2, w2, s, l, a, K1, p, sigma_cols=sig, v_own=v2, v_other=v1,
                                 multiple_of=mult, limits=limits, level_tag=k)
        if K2 == K1:
            K = K1
            break
        K = K2
    else:
        raise SearchExhausted("the two sides do not agree on a common scale", stage=k)
    nt, C1, C2, close_items = close_factorization(
        p, n1.eta_gens, n2.eta_gens, n1.B, n2.B, n, limits, s=s, l=l, v1=v1, v2=v2, level_tag=k
    )
    items = split.items + cf1.items + cf2.items + n1.items + n2.items + close_items
    return StageRecord(k, n, nt, m, l, K, n1.B, n2.B, C1, C2, tuple(items))


def run_pipeline(p: Presentation, cfg: PipelineConfig):
    """Run ``cfg.stages`` stages and assemble the block diagram and schedule.

    Returns ``(BlockDiagram, ParamSchedule, CertBundle)``.
    """
    limits = cfg.limits
    S = cfg.stages
    n = cfg.start_level
    stages: list[StageRecord] = []
    Ms: list[int] = []
    notes = []
    for k in range(1, S + 1):
        r_prev = cfg.r[k - 2] if k > 1 else None
        m_floor = Ms[-1] + 1 if Ms else 2
        m = _stage_m(cfg.r[k - 1], r_prev, m_floor)
        prev = stages[-1] if stages else None
        l0 = max(m + 1, 4, prev.l + 1 if prev else 0)
        a = cfg.a[k - 2] if k > 1 else 1
        if prev is None:
            K_floor, mult_of = 4, 1
        else:
            K_floor = 4 * prev.K
            if Ms:
                K_floor = max(K_floor, Ms[-1] * prev.K)
            mult_of = prev.K
        try:
            st = _stage(p, k, n, m, l0, a, K_floor, mult_of, limits)
        except Exhaustion as e:
            raise type(e)(f"stage {k} (level {n}): {e}", **{**e.diagnostics, "stage": k, "start_level": n}) from e
        except Exception as e:
            if hasattr(e, "exit_code"):
                raise type(e)(f"stage {k} (level {n}): {e}") from e
            raise
        if prev is not None:
            Ms.append(st.K // prev.K)
            s_prev = 1 + Fraction(1, prev.m)
            s_cur = 1 + Fraction(1, st.m)
            notes.append(f"stage {k}: s_prev * s^5 = {float(s_prev * s_cur ** 5):.12g} < r = {float(cfg.r[k - 2]):.12g}")
            if not s_prev * s_cur ** 5 < cfg.r[k - 2]:
                raise SearchExhausted(f"stage {k}: multiplier discipline fails", stage=k)
        stages.append(st)
        n = st.next_level
    bd, sched = assemble(p, cfg, stages, Ms)
    iteration = []
    for k in range(1, S):
        st, nx = stages[k - 1], stages[k]
        blocks = (
            core.mat_mul(nx.B1, st.C1),
            core.mat_mul(nx.B1, st.C2),
            core.mat_mul(nx.B2, st.C1),
            core.mat_mul(nx.B2, st.C2),
        )
        iteration.append(
            check_iteration_bounds(blocks, 1 + Fraction(1, st.m), 1 + Fraction(1, nx.m), st.l, 1, nx.K, st.K, level=k)
        )
    final = check_all(bd, sched)
    bundle = CertBundle(tuple(stages), final, tuple(iteration), tuple(notes))
    if not bundle.passed:
        bad = next(item for item in bundle.all_items() if not item.ok)
        raise SearchExhausted(f"assembled diagram fails {bad.condition} at level {bad.level}", bundle=bundle)
    return bd, sched, bundle


def assemble(p, cfg, stages, Ms):
    """Block diagram and schedule from consecutive stage records."""
    S = len(stages)
    sizes, units, mats = [], [], []
    for st in stages:
        v1, v2 = p.u(1, st.level), p.u(2, st.level)
        units.append(
            (
                core.mat_vec(st.B1, v1),
                core.mat_vec(st.B2, v1),
                core.mat_vec(st.B1, v2),
                core.mat_vec(st.B2, v2),
            )
        )
        sizes.append(len(st.B1))
    for k in range(S - 1):
        st, nx = stages[k], stages[k + 1]
        mats.append(
            BlockLevel(
                core.mat_mul(nx.B1, st.C1),
                core.mat_mul(nx.B1, st.C2),
                core.mat_mul(nx.B2, st.C1),
                core.mat_mul(nx.B2, st.C2),
            )
        )
    bd = BlockDiagram(tuple(sizes), tuple(mats), tuple(units))
    sched = ParamSchedule(
        cfg.r[:S],
        tuple(st.K for st in stages),
        tuple(st.l for st in stages),
        tuple(Ms),
        tuple(cfg.a[: S - 1]),
    )
    return bd, sched
