"""Presentations of a dimension group as an inductive limit of Z^{I_n}.

Levels are numbered from 1.  A prefix with matrices ``A_1..A_N`` has levels
``1..N+1``; ``A_n`` maps level ``n`` to level ``n+1`` and has shape
``I_{n+1} x I_n``.  Positivity in the limit group is decided through the pair
of states ``sigma = (sigma_1, sigma_2)`` supplied by a StateOracle.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from fractions import Fraction
from math import ceil, log2
from typing import Callable, Sequence

from . import core
from .core import RatInterval, interval_dot, mat_mul, mat_vec
from .errors import (
    LevelExhausted,
    LevelOutOfRange,
    PrecisionExhausted,
    ShapeMismatch,
    Undecided,
)
from .report import FAIL, PASS, UNDECIDED, Report, ReportItem, compare, sort_items


@dataclass(frozen=True)
class BratteliDiagramPrefix:
    sizes: tuple
    matrices: tuple

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        mats = tuple(core.as_mat(m) for m in self.matrices)
        if len(sizes) != len(mats) + 1:
            raise ShapeMismatch(f"{len(sizes)} sizes need {len(sizes) - 1} matrices, got {len(mats)}")
        for n, a in enumerate(mats, start=1):
            if core.shape(a) != (sizes[n], sizes[n - 1]):
                raise ShapeMismatch(
                    f"A_{n} has shape {core.shape(a)}, expected {(sizes[n], sizes[n - 1])}"
                )
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "matrices", mats)

    @property
    def levels(self) -> int:
        return len(self.sizes)

    def size(self, n: int) -> int:
        self.check_level(n)
        return self.sizes[n - 1]

    def matrix(self, n: int):
        if not 1 <= n < self.levels:
            raise LevelOutOfRange(f"no connecting matrix A_{n} in a {self.levels}-level prefix")
        return self.matrices[n - 1]

    def check_level(self, n: int) -> None:
        if not 1 <= n <= self.levels:
            raise LevelOutOfRange(f"level {n} outside 1..{self.levels}")

    def product(self, n: int, m: int):
        """``A_{m-1} ... A_n`` (identity when ``m == n``)."""
        self.check_level(n)
        self.check_level(m)
        if m < n:
            raise LevelOutOfRange(f"cannot map level {n} down to level {m}")
        out = core.identity(self.sizes[n - 1])
        for k in range(n, m):
            out = mat_mul(self.matrices[k - 1], out)
        return out


BrattelDiagramPrefix = BratteliDiagramPrefix


@dataclass(frozen=True)
class GroupElement:
    level: int
    vector: tuple

    def __post_init__(self):
        object.__setattr__(self, "level", int(self.level))
        object.__setattr__(self, "vector", tuple(int(x) for x in self.vector))

    def __neg__(self):
        return GroupElement(self.level, tuple(-x for x in self.vector))

    def scaled(self, c: int) -> "GroupElement":
        return GroupElement(self.level, tuple(c * x for x in self.vector))


# ---------------------------------------------------------------- state oracles

Rows = tuple  # ((RatInterval, ...), (RatInterval, ...))


class StateOracle:
    """Source of the state rows ``rho_n`` (a 2 x I_n array per level)."""

    mode = "abstract"

    def rows(self, n: int, precision: int | None = None) -> Rows:
        """Enclosures of ``rho_n``; every entry has width <= 2**-precision."""
        raise NotImplementedError

    def best_rows(self, n: int) -> Rows:
        """Tightest enclosures available without a width requirement."""
        raise NotImplementedError

    @property
    def max_level(self) -> int:
        raise NotImplementedError


class ExactStateOracle(StateOracle):
    mode = "exact"

    def __init__(self, rows_per_level: Sequence):
        data = []
        for rows in rows_per_level:
            if len(rows) != 2:
                raise ShapeMismatch("state rows must have exactly two rows")
            r1 = tuple(core.rat(x) for x in rows[0])
            r2 = tuple(core.rat(x) for x in rows[1])
            if len(r1) != len(r2):
                raise ShapeMismatch("state rows have different lengths")
            data.append((r1, r2))
        self.values = tuple(data)

    @property
    def max_level(self) -> int:
        return len(self.values)

    def exact(self, n: int):
        if not 1 <= n <= len(self.values):
            raise LevelOutOfRange(f"no state rows for level {n}")
        return self.values[n - 1]

    def rows(self, n: int, precision: int | None = None) -> Rows:
        r1, r2 = self.exact(n)
        return (tuple(RatInterval.point(x) for x in r1), tuple(RatInterval.point(x) for x in r2))

    def best_rows(self, n: int) -> Rows:
        return self.rows(n)

    def __eq__(self, other):
        return isinstance(other, ExactStateOracle) and self.values == other.values

    def __hash__(self):
        return hash(self.values)


def _max_width(rows: Rows) -> Fraction:
    return max((iv.width for row in rows for iv in row), default=Fraction(0))


class RefiningStateOracle(StateOracle):
    """Limit-mode oracle backed by a refinement procedure.

    ``refine(n, depth)`` must return valid enclosures of ``rho_n`` computed by
    consuming ``depth`` further levels.  Results are cached per level and only
    ever tightened (new enclosures are intersected with cached ones), under a
    lock so concurrent readers observe monotone refinement.
    """

    mode = "limit"

    def __init__(self, refine: Callable[[int, int], Rows], levels: int, max_depth: Callable[[int], int],
                 source=None):
        self._refine = refine
        self._levels = levels
        self._max_depth = max_depth
        self._cache: dict[int, tuple[int, Rows]] = {}
        self._lock = threading.Lock()
        self.source = source

    @property
    def max_level(self) -> int:
        return self._levels

    def _check(self, n: int) -> None:
        if not 1 <= n <= self._levels:
            raise LevelOutOfRange(f"no state rows for level {n}")

    def cached(self, n: int):
        with self._lock:
            return self._cache.get(n)

    def _store(self, n: int, depth: int, rows: Rows) -> Rows:
        with self._lock:
            old = self._cache.get(n)
            if old is not None:
                rows = tuple(
                    tuple(a.intersection(b) for a, b in zip(ra, rb)) for ra, rb in zip(old[1], rows)
                )
                depth = max(depth, old[0])
            self._cache[n] = (depth, rows)
            return rows

    def at_depth(self, n: int, depth: int) -> Rows:
        self._check(n)
        depth = min(depth, self._max_depth(n))
        hit = self.cached(n)
        if hit is not None and hit[0] >= depth:
            return hit[1]
        return self._store(n, depth, self._refine(n, depth))

    def rows(self, n: int, precision: int | None = None) -> Rows:
        self._check(n)
        if precision is None:
            return self.best_rows(n)
        target = Fraction(1, 2 ** precision)
        hit = self.cached(n)
        if hit is not None and _max_width(hit[1]) <= target:
            return hit[1]
        start = hit[0] + 1 if hit is not None else 1
        top = self._max_depth(n)
        for depth in range(max(1, start), top + 1):
            rows = self.at_depth(n, depth)
            if _max_width(rows) <= target:
                return rows
        best = self.best_rows(n)
        if _max_width(best) <= target:
            return best
        raise PrecisionExhausted(
            f"level {n}: width {float(_max_width(best)):.3g} > 2^-{precision} at maximal depth {top}",
            level=n,
            depth=top,
            width=_max_width(best),
        )

    def best_rows(self, n: int) -> Rows:
        self._check(n)
        return self.at_depth(n, self._max_depth(n))

    def __eq__(self, other):
        return (
            isinstance(other, RefiningStateOracle)
            and self.source is not None
            and self.source == other.source
        )

    def __hash__(self):
        return hash(self.source)


class RestrictedStateOracle(StateOracle):
    """Oracle of a telescoped presentation: level k reads level ``cuts[k-1]``."""

    def __init__(self, base: StateOracle, cuts: Sequence[int]):
        self.base = base
        self.cuts = tuple(cuts)
        self.mode = base.mode

    @property
    def max_level(self) -> int:
        return len(self.cuts)

    def _map(self, n: int) -> int:
        if not 1 <= n <= len(self.cuts):
            raise LevelOutOfRange(f"no state rows for level {n}")
        return self.cuts[n - 1]

    def rows(self, n: int, precision: int | None = None) -> Rows:
        return self.base.rows(self._map(n), precision)

    def best_rows(self, n: int) -> Rows:
        return self.base.best_rows(self._map(n))

    def exact(self, n: int):
        return self.base.exact(self._map(n))

    def __eq__(self, other):
        return (
            isinstance(other, RestrictedStateOracle)
            and self.base == other.base
            and self.cuts == other.cuts
        )

    def __hash__(self):
        return hash((self.base, self.cuts))


# ---------------------------------------------------------------- presentations


@dataclass(frozen=True)
class Presentation:
    diagram: BratteliDiagramPrefix
    u1: tuple
    u2: tuple
    states: StateOracle
    flags: dict = field(default_factory=dict, compare=True, hash=False)

    def __post_init__(self):
        u1 = tuple(tuple(int(x) for x in v) for v in self.u1)
        u2 = tuple(tuple(int(x) for x in v) for v in self.u2)
        levels = self.diagram.levels
        if len(u1) != levels or len(u2) != levels:
            raise ShapeMismatch(f"u-vectors must be given for all {levels} levels")
        for n in range(1, levels + 1):
            size = self.diagram.sizes[n - 1]
            if len(u1[n - 1]) != size or len(u2[n - 1]) != size:
                raise ShapeMismatch(f"u-vectors at level {n} must have length {size}")
        object.__setattr__(self, "u1", u1)
        object.__setattr__(self, "u2", u2)
        object.__setattr__(self, "flags", dict(self.flags))

    @property
    def levels(self) -> int:
        return self.diagram.levels

    def u(self, i: int, n: int) -> tuple:
        self.diagram.check_level(n)
        return (self.u1 if i == 1 else self.u2)[n - 1]

    def generator(self, n: int, i: int) -> GroupElement:
        """``gamma_n(eps_i)`` with ``i`` counted from 0."""
        return GroupElement(n, core.unit(self.diagram.size(n), i))


def _diagram_of(obj) -> BratteliDiagramPrefix:
    return obj.diagram if isinstance(obj, Presentation) else obj


def push(obj, e: GroupElement, m: int) -> GroupElement:
    """Representative of ``e`` at level ``m >= e.level``."""
    d = _diagram_of(obj)
    d.check_level(e.level)
    if len(e.vector) != d.sizes[e.level - 1]:
        raise ShapeMismatch(f"vector of length {len(e.vector)} at level {e.level} of size {d.sizes[e.level - 1]}")
    if m < e.level or m > d.levels:
        raise LevelOutOfRange(f"cannot push level {e.level} to level {m} (prefix has {d.levels})")
    v = e.vector
    for k in range(e.level, m):
        v = mat_vec(d.matrices[k - 1], v)
    return GroupElement(m, v)


def common_level(obj, *elements: GroupElement) -> list[GroupElement]:
    top = max(e.level for e in elements)
    return [push(obj, e, top) for e in elements]


def add(obj, *elements: GroupElement) -> GroupElement:
    pushed = common_level(obj, *elements)
    vec = pushed[0].vector
    for e in pushed[1:]:
        vec = core.vec_add(vec, e.vector)
    return GroupElement(pushed[0].level, vec)


def sub(obj, a: GroupElement, b: GroupElement) -> GroupElement:
    return add(obj, a, -b)


def combination(obj, coeffs: Sequence[int], elements: Sequence[GroupElement]) -> GroupElement:
    """``sum_k coeffs[k] * elements[k]`` represented at the deepest level involved."""
    pushed = common_level(obj, *elements)
    size = len(pushed[0].vector)
    vec = [0] * size
    for c, e in zip(coeffs, pushed):
        if c:
            for i, x in enumerate(e.vector):
                vec[i] += c * x
    return GroupElement(pushed[0].level, tuple(vec))


def _unit_coordinates(p: Presentation, e: GroupElement):
    """Exact ``(a, b)`` with ``e = a u^1 + b u^2`` at its level, if such exist."""
    u1 = p.u1[e.level - 1]
    u2 = p.u2[e.level - 1]
    x = e.vector
    n = len(x)
    for i in range(n):
        for j in range(i + 1, n):
            det = u1[i] * u2[j] - u1[j] * u2[i]
            if det:
                a = Fraction(x[i] * u2[j] - x[j] * u2[i], det)
                b = Fraction(u1[i] * x[j] - u1[j] * x[i], det)
                if all(a * s + b * t == y for s, t, y in zip(u1, u2, x)):
                    return a, b
                return None
    return None


def _sigma_from_rows(rows: Rows, x) -> tuple[RatInterval, RatInterval]:
    return (interval_dot(x, rows[0]), interval_dot(x, rows[1]))


def sigma(p: Presentation, e: GroupElement, precision: int | None = None):
    """Enclosures of ``(sigma_1(e), sigma_2(e))``.

    In exact mode these are points.  In limit mode the width of each enclosure
    is at most ``2**-precision`` (``precision=None`` gives the tightest
    enclosure the oracle can produce).
    """
    p.diagram.check_level(e.level)
    if len(e.vector) != p.diagram.sizes[e.level - 1]:
        raise ShapeMismatch("vector length does not match level size")
    coords = _unit_coordinates(p, e)
    if coords is not None:
        return (RatInterval.point(coords[0]), RatInterval.point(coords[1]))
    if p.states.mode == "exact" or precision is None:
        rows = p.states.best_rows(e.level) if precision is None else p.states.rows(e.level)
        return _sigma_from_rows(rows, e.vector)
    weight = sum(abs(x) for x in e.vector) or 1
    bits = precision + ceil(log2(weight)) + 1
    rows = p.states.rows(e.level, bits)
    return _sigma_from_rows(rows, e.vector)


def sigma_best(p: Presentation, e: GroupElement):
    return sigma(p, e, None)


def _sign(iv: RatInterval):
    if iv.lo > 0:
        return 1
    if iv.hi < 0:
        return -1
    if iv.lo == iv.hi == 0:
        return 0
    return None


def is_strictly_positive(p: Presentation, e: GroupElement, precision: int | None = None):
    """True/False/Undecided membership of ``e`` in ``G+ minus {0}``."""
    if not any(e.vector):
        return False
    try:
        s = sigma(p, e, precision)
    except PrecisionExhausted:
        s = sigma_best(p, e)
    s1, s2 = s
    if s1.lo > 0 and s2.lo > 0:
        return True
    if s1.hi <= 0 or s2.hi <= 0:
        return False
    if precision is not None:
        s1, s2 = sigma_best(p, e)
        if s1.lo > 0 and s2.lo > 0:
            return True
        if s1.hi <= 0 or s2.hi <= 0:
            return False
    return Undecided


def equal(p, e1: GroupElement, e2: GroupElement, max_level: int | None = None):
    """Three-valued equality in the inductive limit."""
    d = _diagram_of(p)
    top = d.levels if max_level is None else min(max_level, d.levels)
    a, b = common_level(d, e1, e2)
    level = a.level
    va, vb = a.vector, b.vector
    while True:
        if va == vb:
            return True
        if level >= top:
            break
        va = mat_vec(d.matrices[level - 1], va)
        vb = mat_vec(d.matrices[level - 1], vb)
        level += 1
    if isinstance(p, Presentation):
        diff = GroupElement(a.level, core.vec_sub(a.vector, b.vector))
        s1, s2 = sigma_best(p, diff)
        if not s1.contains(0) or not s2.contains(0):
            return False
    return Undecided


def telescope(p: Presentation, cuts: Sequence[int]) -> Presentation:
    """Presentation restricted to the levels in ``cuts`` (strictly increasing)."""
    cuts = [int(c) for c in cuts]
    if not cuts:
        raise LevelOutOfRange("at least one cut is required")
    for c in cuts:
        p.diagram.check_level(c)
    if any(b <= a for a, b in zip(cuts, cuts[1:])):
        raise LevelOutOfRange(f"cuts must be strictly increasing: {cuts}")
    if cuts == list(range(1, p.levels + 1)):
        return p
    mats = tuple(p.diagram.product(a, b) for a, b in zip(cuts, cuts[1:]))
    sizes = tuple(p.diagram.sizes[c - 1] for c in cuts)
    if isinstance(p.states, ExactStateOracle):
        states = ExactStateOracle([p.states.exact(c) for c in cuts])
    else:
        states = RestrictedStateOracle(p.states, cuts)
    return Presentation(
        BratteliDiagramPrefix(sizes, mats),
        tuple(p.u1[c - 1] for c in cuts),
        tuple(p.u2[c - 1] for c in cuts),
        states,
        p.flags,
    )


def positive_representative(p, e: GroupElement, max_level: int | None = None) -> GroupElement:
    """First representative of ``e`` whose entries are all >= 1."""
    d = _diagram_of(p)
    top = d.levels if max_level is None else min(max_level, d.levels)
    cur = e
    while True:
        if all(x >= 1 for x in cur.vector):
            return cur
        if cur.level >= top:
            raise LevelExhausted(
                f"no entrywise positive representative up to level {top}",
                level=cur.level,
                vector=cur.vector,
            )
        cur = push(d, cur, cur.level + 1)


# ---------------------------------------------------------------- validation


def _interval_eq_item(condition, level, indices, enclosure: RatInterval, value) -> ReportItem:
    if enclosure.is_point():
        verdict = PASS if enclosure.lo == value else FAIL
        lhs = enclosure.lo
    else:
        verdict = PASS if enclosure.contains(value) else FAIL
        lhs = (enclosure.lo, enclosure.hi)
    return ReportItem(condition, level, tuple(indices), lhs, value, "==", verdict)


def validate(p: Presentation, horizon: int | None = None) -> Report:
    """Check the presentation invariants on the available prefix.

    Conditions: ``nonnegative``, ``no_sink`` (zero column), ``no_source`` (zero
    row), ``u_recursion`` (A_n u_n^i = u_{n+1}^i), ``state_recursion``
    (rho_{n+1} A_n = rho_n), ``state_unit`` (rho_n u_n^1 = (1,0), rho_n u_n^2 =
    (0,1)) and ``generator_positive``.  With interval-valued state rows an
    identity fails only when the enclosures exclude it; a positivity claim
    that the enclosure cannot settle is reported as undecided.
    """
    d = p.diagram
    top = d.levels if horizon is None else min(horizon, d.levels)
    items: list[ReportItem] = []
    for n in range(1, top):
        a = d.matrices[n - 1]
        for r, row in enumerate(a):
            for c, x in enumerate(row):
                if x < 0:
                    items.append(compare("nonnegative", n, (r + 1, c + 1), 0, x))
            items.append(compare("no_source", n, (r + 1,), 1, sum(1 for x in row if x > 0)))
        for c in range(len(a[0]) if a else 0):
            items.append(compare("no_sink", n, (c + 1,), 1, sum(1 for row in a if row[c] > 0)))
        for i, us in ((1, p.u1), (2, p.u2)):
            pushed = mat_vec(a, us[n - 1])
            for r, (lhs, rhs) in enumerate(zip(pushed, us[n])):
                items.append(compare("u_recursion", n, (i, r + 1), lhs, rhs, "=="))
    levels_with_states = min(top, p.states.max_level)
    rows_cache = {}

    def rows_at(n):
        if n not in rows_cache:
            rows_cache[n] = p.states.best_rows(n)
        return rows_cache[n]

    for n in range(1, levels_with_states + 1):
        rows = rows_at(n)
        size = d.sizes[n - 1]
        if len(rows[0]) != size:
            items.append(ReportItem("state_shape", n, (), len(rows[0]), size, "==", FAIL))
            continue
        if n < levels_with_states:
            a = d.matrices[n - 1]
            nxt = rows_at(n + 1)
            for k in range(2):
                for c in range(size):
                    col = [row[c] for row in a]
                    enc = interval_dot(col, nxt[k])
                    items.append(_overlap_item(n, k, c, enc, rows[k][c]))
        for i, u in ((1, p.u1[n - 1]), (2, p.u2[n - 1])):
            for k in range(2):
                enc = interval_dot(u, rows[k])
                items.append(_interval_eq_item("state_unit", n, (i, k + 1), enc, 1 if i == k + 1 else 0))
        for c in range(size):
            for k in range(2):
                iv = rows[k][c]
                if iv.lo > 0:
                    verdict = PASS
                elif iv.hi <= 0:
                    verdict = FAIL
                else:
                    verdict = UNDECIDED
                lhs = iv.lo if iv.is_point() else (iv.lo, iv.hi)
                items.append(ReportItem("generator_positive", n, (k + 1, c + 1), 0, lhs, "<", verdict))
    return Report(sort_items(items), top, "presentation")


def _overlap_item(n: int, k: int, c: int, pulled: RatInterval, own: RatInterval) -> ReportItem:
    if pulled.is_point() and own.is_point():
        verdict = PASS if pulled.lo == own.lo else FAIL
        return ReportItem("state_recursion", n, (k + 1, c + 1), pulled.lo, own.lo, "==", verdict)
    verdict = PASS if pulled.intersects(own) else FAIL
    return ReportItem(
        "state_recursion", n, (k + 1, c + 1), (pulled.lo, pulled.hi), (own.lo, own.hi), "==", verdict
    )
