"""Certified enclosures of the two extremal states on a block diagram.

For a positive element ``x = (x1, x2)`` at level ``n`` the coefficients
``s, t`` (resp. ``s_bar, t_bar``) invert the lower (resp. upper) comparison
matrices of the boundary vectors at level ``n+1``.  With ``y`` the image of
``x`` at level ``n+1`` this gives

    r_n^-2 (s_bar u^1 + t_bar u^2) <= y <= r_n^2 (s u^1 + t u^2)

so ``sigma_1(x)`` lies in ``[r_n^-2 s_bar, r_n^2 s]`` and ``sigma_2(x)`` in
``[r_n^-2 t_bar, r_n^2 t]``.  The width shrinks as ``r_n -> 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from . import core
from .core import RatInterval
from .diagram import RefiningStateOracle
from .errors import InvalidInput, LevelOutOfRange, ShapeMismatch
from .verifier import BlockDiagram, ParamSchedule, check_theorem13, truncate


@dataclass(frozen=True)
class CoeffBounds:
    s: Fraction
    t: Fraction
    s_bar: Fraction
    t_bar: Fraction


@dataclass(frozen=True)
class PositiveElement:
    """``0 <= (x1, x2) <= C u_level`` with ``C`` the least such rational."""

    level: int
    x1: tuple
    x2: tuple
    C: Fraction

    @property
    def vector(self) -> tuple:
        return self.x1 + self.x2


@dataclass(frozen=True)
class EvalResult:
    sigma1: RatInterval
    sigma2: RatInterval
    depth: int
    exhausted: bool = False


def unit_sum(bd: BlockDiagram, n: int) -> tuple:
    """``u_n = u_n^1 + u_n^2`` as one vector of length ``2 J_n``."""
    return core.vec_add(bd.unit_vector(n, 1), bd.unit_vector(n, 2))


def positive_element(bd: BlockDiagram, level: int, x1, x2) -> PositiveElement:
    if not 1 <= level <= bd.levels:
        raise LevelOutOfRange(f"level {level} outside 1..{bd.levels}")
    x1 = tuple(int(v) for v in x1)
    x2 = tuple(int(v) for v in x2)
    J = bd.sizes[level - 1]
    if len(x1) != J or len(x2) != J:
        raise ShapeMismatch(f"element blocks must have length {J}")
    if any(v < 0 for v in x1 + x2):
        raise InvalidInput("a positive element needs nonnegative coordinates")
    u = unit_sum(bd, level)
    if any(v <= 0 for v in u):
        raise InvalidInput(f"u_{level} is not entrywise positive")
    C = max((Fraction(a, b) for a, b in zip(x1 + x2, u)), default=Fraction(0))
    return PositiveElement(level, x1, x2, C)


def _split(bd: BlockDiagram, n: int, vec) -> PositiveElement:
    J = bd.sizes[n - 1]
    return positive_element(bd, n, vec[:J], vec[J:])


def push_element(bd: BlockDiagram, x: PositiveElement) -> PositiveElement:
    """Image at the next level; ``C`` is carried along unchanged."""
    n = x.level
    if n >= bd.levels:
        raise LevelOutOfRange(f"no level after {n}")
    y = core.mat_vec(bd.matrices[n - 1].block_matrix(), x.vector)
    J = bd.sizes[n]
    return PositiveElement(n + 1, y[:J], y[J:], x.C)


def coeff_bounds(bd: BlockDiagram, sched: ParamSchedule, n: int, x: PositiveElement) -> CoeffBounds:
    if not 1 <= n < bd.levels or len(sched.r) <= n:
        raise LevelOutOfRange(f"coefficient bounds at level {n} need level {n + 1}")
    lvl = bd.matrices[n - 1]
    X1 = core.dot(lvl.A11[0], x.x1)
    X2 = core.dot(lvl.A22[0], x.x2)
    ln = Fraction(1, sched.l[n - 1])
    v1 = X1 + ln * X2
    v2 = ln * X1 + X2
    r = sched.r[n]
    L = Fraction(1, sched.l[n])
    K = sched.K[n]
    d = 1 / (r * r) - r * r * L * L
    db = r * r - L * L / (r * r)
    s = (v1 / r + r * L * v2) / (K * d)
    t = (r * L * v1 + v2 / r) / (K * d)
    sb = (r * v1 + L * v2 / r) / (K * db)
    tb = (L * v1 / r + r * v2) / (K * db)
    return CoeffBounds(s, t, sb, tb)


def state_intervals(cb: CoeffBounds, r_n) -> tuple[RatInterval, RatInterval]:
    r2 = core.rat(r_n) ** 2
    return RatInterval(cb.s_bar / r2, r2 * cb.s), RatInterval(cb.t_bar / r2, r2 * cb.t)


def sandwich_holds(bd: BlockDiagram, sched: ParamSchedule, x: PositiveElement, cb: CoeffBounds) -> bool:
    """Entrywise ``r^-2 (s_bar u^1 + t_bar u^2) <= y <= r^2 (s u^1 + t u^2)`` at the next level."""
    n = x.level
    y = push_element(bd, x).vector
    r2 = sched.r[n - 1] ** 2
    u1, u2 = bd.unit_vector(n + 1, 1), bd.unit_vector(n + 1, 2)
    for yk, a, b in zip(y, u1, u2):
        if not (cb.s_bar * a + cb.t_bar * b) / r2 <= yk <= r2 * (cb.s * a + cb.t * b):
            return False
    return True


def gap_bound(sched: ParamSchedule, x: PositiveElement) -> Fraction:
    n = x.level
    r = sched.r[n]
    return x.C * sched.r[n - 1] ** 2 * r * (r - 1 / r)


def gaps(sched: ParamSchedule, n: int, cb: CoeffBounds) -> tuple[Fraction, Fraction]:
    """``(r^2 - r^-2 l^-2) s_bar - (r^-2 - r^2 l^-2) s`` and the same for ``t``."""
    r = sched.r[n]
    L = Fraction(1, sched.l[n])
    db = r * r - L * L / (r * r)
    d = 1 / (r * r) - r * r * L * L
    return db * cb.s_bar - d * cb.s, db * cb.t_bar - d * cb.t


def gaps_hold(sched: ParamSchedule, x: PositiveElement, cb: CoeffBounds) -> bool:
    hi = gap_bound(sched, x)
    return all(0 <= g <= hi for g in gaps(sched, x.level, cb))


@lru_cache(maxsize=256)
def _validated(bd: BlockDiagram, sched: ParamSchedule, top: int) -> None:
    cut_bd, cut_sched = truncate(bd, sched, top)
    report = check_theorem13(cut_bd, cut_sched)
    if not report.passed:
        bad = report.failures()[0]
        raise InvalidInput(
            f"block conditions fail on levels 1..{top}: {bad.condition} at level {bad.level} {bad.indices}"
        )


def evaluate(bd: BlockDiagram, sched: ParamSchedule, x: PositiveElement, target_width, max_depth: int) -> EvalResult:
    """Push ``x`` level by level until both enclosures are at most ``target_width`` wide.

    Each returned enclosure is the intersection of the certified intervals of
    all depths consumed so far.  When ``max_depth`` (or the prefix) runs out
    first the best enclosures are returned with ``exhausted=True``.
    """
    target = core.rat(target_width)
    top = min(x.level + max(max_depth, 0), bd.levels)
    if top <= x.level:
        raise LevelOutOfRange(f"no levels after {x.level} to evaluate with")
    _validated(bd, sched, top)
    i1 = i2 = None
    cur = x
    depth = 0
    while cur.level < top:
        cb = coeff_bounds(bd, sched, cur.level, cur)
        a, b = state_intervals(cb, sched.r[cur.level - 1])
        i1 = a if i1 is None else i1.intersection(a)
        i2 = b if i2 is None else i2.intersection(b)
        depth += 1
        if i1.width <= target and i2.width <= target:
            return EvalResult(i1, i2, depth)
        cur = push_element(bd, cur)
    return EvalResult(i1, i2, depth, exhausted=True)


def trace(bd: BlockDiagram, sched: ParamSchedule, x: PositiveElement, max_depth: int):
    """Per-depth records ``(element, bounds, intervals)`` without intersection."""
    out = []
    cur = x
    top = min(x.level + max_depth, bd.levels)
    while cur.level < top:
        cb = coeff_bounds(bd, sched, cur.level, cur)
        out.append((cur, cb, state_intervals(cb, sched.r[cur.level - 1])))
        cur = push_element(bd, cur)
    return out


def limit_oracle(bd: BlockDiagram, sched: ParamSchedule) -> RefiningStateOracle:
    """State rows of the flattened diagram, refined by consuming deeper levels."""
    _validated(bd, sched, bd.levels)
    last = bd.levels

    def refine(n: int, depth: int):
        size = 2 * bd.sizes[n - 1]
        rows1, rows2 = [], []
        for k in range(size):
            x = _split(bd, n, core.unit(size, k))
            res = evaluate(bd, sched, x, 0, depth)
            rows1.append(res.sigma1)
            rows2.append(res.sigma2)
        return tuple(rows1), tuple(rows2)

    oracle = RefiningStateOracle(refine, last - 1, lambda n: last - n, source=("block", bd, sched))
    return oracle
