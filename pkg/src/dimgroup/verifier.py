"""Finite-prefix checks for diagrams in 2x2 block form.

A BlockDiagram has groups ``Z^{J_n} + Z^{J_n}``, connecting matrices
``[[A11, A12], [A21, A22]]`` and boundary vectors ``u^{i,j}_n`` (``i`` picks
the unit ``u^i``, ``j`` the block).  Condition identifiers used in reports:

* ``R``       block recursion of the boundary vectors
* ``T13.4a``  ``r^-1 K <= u^{1,1}, u^{2,2} <= r K``
* ``T13.4b``  ``-r K <= l u^{1,2}, l u^{2,1} <= -r^-1 K``
* ``T13.5a``  ``r^-1 A11(j',j) <= l A21(j'',j) <= r A11(j',j)``
* ``T13.5b``  ``r^-1 A22(j',j) <= l A12(j'',j) <= r A22(j',j)``
* ``T13.pos`` strict positivity of the four blocks
* ``S.r``, ``S.K``, ``S.l``, ``S.M`` schedule bounds and monotonicity
* ``T14.5a``  ``a <= A12, A21``
* ``T14.6``   ``r^-1 M <= row sums of A11, A22 <= r M``
* ``I.cross1``, ``I.cross2``, ``I.rows`` iteration bounds for a product of stages
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from . import core
from .core import mat_vec
from .errors import ShapeMismatch
from .report import Report, ReportItem, compare, merge, sort_items

BLOCKS = ("A11", "A12", "A21", "A22")
UNITS = ("u11", "u12", "u21", "u22")


@dataclass(frozen=True)
class BlockLevel:
    A11: tuple
    A12: tuple
    A21: tuple
    A22: tuple

    def block_matrix(self):
        return core.block(self.A11, self.A12, self.A21, self.A22)


@dataclass(frozen=True)
class BlockDiagram:
    """Sizes ``J_1..J_{N+1}``, per-level blocks and per-level boundary vectors.

    ``matrices[n-1]`` is a BlockLevel for level ``n``; ``units[n-1]`` is the
    4-tuple ``(u11, u12, u21, u22)`` at level ``n``.
    """

    sizes: tuple
    matrices: tuple
    units: tuple

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        mats = []
        for lvl in self.matrices:
            if not isinstance(lvl, BlockLevel):
                lvl = BlockLevel(*lvl)
            mats.append(BlockLevel(*(core.as_mat(getattr(lvl, b)) for b in BLOCKS)))
        units = tuple(tuple(tuple(int(x) for x in v) for v in u4) for u4 in self.units)
        if len(sizes) != len(mats) + 1 or len(units) != len(sizes):
            raise ShapeMismatch("a block diagram needs N+1 sizes, N block levels and N+1 unit tuples")
        for n, lvl in enumerate(mats, start=1):
            for b in BLOCKS:
                if core.shape(getattr(lvl, b)) != (sizes[n], sizes[n - 1]):
                    raise ShapeMismatch(f"block {b} at level {n} has shape {core.shape(getattr(lvl, b))}")
        for n, u4 in enumerate(units, start=1):
            if len(u4) != 4 or any(len(v) != sizes[n - 1] for v in u4):
                raise ShapeMismatch(f"boundary vectors at level {n} must be four vectors of length {sizes[n - 1]}")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "matrices", tuple(mats))
        object.__setattr__(self, "units", units)

    @property
    def levels(self) -> int:
        return len(self.sizes)

    def u(self, n: int, name: str):
        return self.units[n - 1][UNITS.index(name)]

    def unit_vector(self, n: int, i: int):
        """``u^i_n`` as the concatenation of its two blocks."""
        u11, u12, u21, u22 = self.units[n - 1]
        return u11 + u12 if i == 1 else u21 + u22


@dataclass(frozen=True)
class ParamSchedule:
    r: tuple
    K: tuple
    l: tuple
    M: tuple | None = None
    a: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "r", tuple(core.rat(x) for x in self.r))
        object.__setattr__(self, "K", tuple(int(x) for x in self.K))
        object.__setattr__(self, "l", tuple(int(x) for x in self.l))
        if self.M is not None:
            object.__setattr__(self, "M", tuple(int(x) for x in self.M))
        if self.a is not None:
            object.__setattr__(self, "a", tuple(int(x) for x in self.a))


def _needs(sched: ParamSchedule, bd: BlockDiagram) -> None:
    if len(sched.r) < bd.levels or len(sched.K) < bd.levels or len(sched.l) < bd.levels:
        raise ShapeMismatch(f"schedule must cover all {bd.levels} levels")


def check_recursion(bd: BlockDiagram) -> Report:
    items = []
    for n in range(1, bd.levels):
        big = bd.matrices[n - 1].block_matrix()
        for i in (1, 2):
            image = mat_vec(big, bd.unit_vector(n, i))
            target = bd.unit_vector(n + 1, i)
            for k, (lhs, rhs) in enumerate(zip(image, target)):
                items.append(compare("R", n, (i, k + 1), lhs, rhs, "=="))
    return Report(sort_items(items), bd.levels, "recursion")


def _schedule_items(sched: ParamSchedule, levels: int) -> list[ReportItem]:
    items = []
    for n in range(1, levels + 1):
        r = sched.r[n - 1]
        items.append(compare("S.r", n, ("gt1",), 1, r, "<"))
        items.append(compare("S.r", n, ("lt2",), r, 2, "<"))
        items.append(compare("S.K", n, ("ge4",), 4, sched.K[n - 1]))
        items.append(compare("S.l", n, ("ge4",), 4, sched.l[n - 1]))
        if n < levels:
            items.append(compare("S.r", n, ("decreasing",), sched.r[n], r, "<"))
            items.append(compare("S.K", n, ("increasing",), sched.K[n - 1], sched.K[n], "<"))
            items.append(compare("S.l", n, ("increasing",), sched.l[n - 1], sched.l[n], "<"))
    return items


def check_theorem13(bd: BlockDiagram, sched: ParamSchedule) -> Report:
    _needs(sched, bd)
    items = _schedule_items(sched, bd.levels)
    for n in range(1, bd.levels + 1):
        r, K, l = sched.r[n - 1], sched.K[n - 1], sched.l[n - 1]
        lo, hi = K / r, r * K
        for name in ("u11", "u22"):
            for j, x in enumerate(bd.u(n, name)):
                items.append(compare("T13.4a", n, (name, j + 1, "lo"), lo, x))
                items.append(compare("T13.4a", n, (name, j + 1, "hi"), x, hi))
        for name in ("u12", "u21"):
            for j, x in enumerate(bd.u(n, name)):
                items.append(compare("T13.4b", n, (name, j + 1, "lo"), -r * K, l * x))
                items.append(compare("T13.4b", n, (name, j + 1, "hi"), l * x, -K / r))
    for n in range(1, bd.levels):
        r, l = sched.r[n - 1], sched.l[n - 1]
        lvl = bd.matrices[n - 1]
        for b in BLOCKS:
            for jp, row in enumerate(getattr(lvl, b)):
                for j, x in enumerate(row):
                    items.append(compare("T13.pos", n, (b, jp + 1, j + 1), 1, x))
        for cond, diag_b, cross_b in (("T13.5a", lvl.A11, lvl.A21), ("T13.5b", lvl.A22, lvl.A12)):
            rows_next = len(diag_b)
            cols = len(diag_b[0]) if diag_b else 0
            for j in range(cols):
                for jp in range(rows_next):
                    d = diag_b[jp][j]
                    for jpp in range(rows_next):
                        c = l * cross_b[jpp][j]
                        items.append(compare(cond, n, (jp + 1, jpp + 1, j + 1, "lo"), d / r, c))
                        items.append(compare(cond, n, (jp + 1, jpp + 1, j + 1, "hi"), c, r * d))
    return Report(sort_items(items), bd.levels, "theorem13")


def check_theorem14_extras(bd: BlockDiagram, sched: ParamSchedule) -> Report:
    _needs(sched, bd)
    items = []
    n_mats = bd.levels - 1
    if n_mats and (sched.M is None or sched.a is None or len(sched.M) < n_mats or len(sched.a) < n_mats):
        raise ShapeMismatch("schedule must provide M and a for every connecting level")
    for n in range(1, n_mats + 1):
        r = sched.r[n - 1]
        M, a = sched.M[n - 1], sched.a[n - 1]
        items.append(compare("S.M", n, ("ge4",), 4, M))
        if n < n_mats:
            items.append(compare("S.M", n, ("increasing",), M, sched.M[n]))
        lvl = bd.matrices[n - 1]
        for b in ("A12", "A21"):
            for jp, row in enumerate(getattr(lvl, b)):
                for j, x in enumerate(row):
                    items.append(compare("T14.5a", n, (b, jp + 1, j + 1), a, x))
        for b in ("A11", "A22"):
            for jp, row in enumerate(getattr(lvl, b)):
                total = sum(row)
                items.append(compare("T14.6", n, (b, jp + 1, "lo"), M / r, total))
                items.append(compare("T14.6", n, (b, jp + 1, "hi"), total, r * M))
    return Report(sort_items(items), bd.levels, "theorem14")


def check_all(bd: BlockDiagram, sched: ParamSchedule, horizon: int | None = None) -> Report:
    """Recursion, block conditions and the a/M extras on the first ``horizon`` levels."""
    if horizon is not None and horizon < bd.levels:
        bd, sched = truncate(bd, sched, horizon)
    return merge(
        [check_recursion(bd), check_theorem13(bd, sched), check_theorem14_extras(bd, sched)],
        title="block",
    )


def truncate(bd: BlockDiagram, sched: ParamSchedule, levels: int):
    levels = max(1, min(levels, bd.levels))
    cut = BlockDiagram(bd.sizes[:levels], bd.matrices[: levels - 1], bd.units[:levels])
    cs = ParamSchedule(
        sched.r[:levels],
        sched.K[:levels],
        sched.l[:levels],
        None if sched.M is None else sched.M[: levels - 1],
        None if sched.a is None else sched.a[: levels - 1],
    )
    return cut, cs


def check_iteration_bounds(blocks, s, s_tilde, l, m_tilde, K_tilde, K, level: int = 1) -> Report:
    """Bounds for the product of two consecutive stages.

    ``blocks`` is ``(B1C1, B1C2, B2C1, B2C2)`` (each ``Jt x J``).  Checks
    ``s^-1 st^-5 (B1C1)(jh, j) <= l (B2C1)(jh', j) <= s st^5 (B1C1)(jh, j)``,
    the analogue with ``B2C2``/``B1C2``, and
    ``s^-1 st^-2 mt Kt / K <= row sums of B1C1, B2C2 <= s st^3 mt Kt / K``.
    """
    b11, b12, b21, b22 = (core.as_mat(b) for b in blocks)
    shapes = {core.shape(b) for b in (b11, b12, b21, b22)}
    if len(shapes) != 1:
        raise ShapeMismatch(f"product blocks have differing shapes {sorted(shapes)}")
    s, st = core.rat(s), core.rat(s_tilde)
    lo_f, hi_f = 1 / (s * st ** 5), s * st ** 5
    items = []
    rows, cols = shapes.pop()
    for cond, diag_b, cross_b in (("I.cross1", b11, b21), ("I.cross2", b22, b12)):
        for j in range(cols):
            for jh in range(rows):
                d = diag_b[jh][j]
                for jhp in range(rows):
                    c = l * cross_b[jhp][j]
                    items.append(compare(cond, level, (jh + 1, jhp + 1, j + 1, "lo"), lo_f * d, c))
                    items.append(compare(cond, level, (jh + 1, jhp + 1, j + 1, "hi"), c, hi_f * d))
    scale = Fraction(m_tilde * K_tilde, K)
    lo_s = scale / (s * st ** 2)
    hi_s = s * st ** 3 * scale
    for name, b in (("B1C1", b11), ("B2C2", b22)):
        for jh, row in enumerate(b):
            total = sum(row)
            items.append(compare("I.rows", level, (name, jh + 1, "lo"), lo_s, total))
            items.append(compare("I.rows", level, (name, jh + 1, "hi"), total, hi_s))
    return Report(sort_items(items), level, "iteration")


def check_unit_consequences(bd: BlockDiagram, sched: ParamSchedule) -> Report:
    """Consequences of the hypotheses at each level.

    ``L.comb``: ``l u^1 + 4 u^2 >= 0`` entrywise; ``L.lr``: ``l >= 4 > r^2``;
    ``L.unit``: ``u^1 + u^2 > 0`` entrywise.
    """
    _needs(sched, bd)
    items = []
    for n in range(1, bd.levels + 1):
        l, r = sched.l[n - 1], sched.r[n - 1]
        u1, u2 = bd.unit_vector(n, 1), bd.unit_vector(n, 2)
        for k, (a, b) in enumerate(zip(u1, u2)):
            items.append(compare("L.comb", n, (k + 1,), 0, l * a + 4 * b))
            items.append(compare("L.unit", n, (k + 1,), 0, a + b, "<"))
        items.append(compare("L.lr", n, ("l>=4",), 4, l))
        items.append(compare("L.lr", n, ("4>r^2",), r * r, 4, "<"))
    return Report(sort_items(items), bd.levels, "consequences")


def replay(item: ReportItem) -> bool:
    """Re-evaluate a stored exact comparison."""
    return compare(item.condition, item.level, item.indices, item.lhs, item.rhs, item.relation).verdict == item.verdict
