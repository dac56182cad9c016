"""Planar cone geometry around the rays through (l, 1) and (1, l).

``C(l, 1) = {(x, y) : 0 < (l-1) y < x < (l+1) y}`` and ``C(l, 2)`` is its
mirror image.  ``h1, h2`` is the basis dual to ``(l, 1), (1, l)`` and
``p1, p2`` are the oblique projections onto the two rays.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from . import core
from .core import RatInterval
from .errors import InvalidL, Undecided


@dataclass(frozen=True)
class ConeParams:
    l: int
    side: int

    def __post_init__(self):
        _check_l(self.l)
        if self.side not in (1, 2):
            raise ValueError("side must be 1 or 2")


@dataclass(frozen=True)
class TestSets:
    F1: tuple
    F2: tuple

    __test__ = False  # not a pytest class


def _check_l(l) -> int:
    if isinstance(l, bool) or int(l) != l or l < 2:
        raise InvalidL(f"l must be an integer >= 2, got {l!r}")
    return int(l)


def dual_basis(l: int):
    """``(h1, h2)`` with ``(l,1).h1 = (1,l).h2 = 1`` and ``(1,l).h1 = (l,1).h2 = 0``."""
    l = _check_l(l)
    d = l * l - 1
    h1 = (Fraction(l, d), Fraction(-1, d))
    h2 = (Fraction(-1, d), Fraction(l, d))
    return h1, h2


def ray(l: int, side: int) -> tuple[int, int]:
    return (l, 1) if side == 1 else (1, l)


def contains(l: int, side: int, v) -> bool:
    """Strict membership of an exact planar vector in ``C(l, side)``."""
    l = _check_l(l)
    x, y = core.rat(v[0]), core.rat(v[1])
    if side == 2:
        x, y = y, x
    return 0 < (l - 1) * y < x < (l + 1) * y


def cone_slacks(l: int, side: int, v) -> tuple:
    """The three margins whose positivity defines membership of ``v``."""
    x, y = core.rat(v[0]), core.rat(v[1])
    if side == 2:
        x, y = y, x
    return ((l - 1) * y, x - (l - 1) * y, (l + 1) * y - x)


def contains_enclosure(l: int, side: int, box):
    """Membership for a vector known only through interval enclosures.

    Returns True when every point of the box lies in the cone, False when no
    point does, Undecided otherwise.
    """
    l = _check_l(l)
    x, y = box
    if side == 2:
        x, y = y, x
    m1 = y * (l - 1)
    m2 = x - y * (l - 1)
    m3 = y * (l + 1) - x
    if m1.lo > 0 and m2.lo > 0 and m3.lo > 0:
        return True
    if m1.hi <= 0 or m2.hi <= 0 or m3.hi <= 0:
        return False
    return Undecided


def min_margin(l: int, side: int, box) -> Fraction:
    """Smallest lower bound among the three membership margins of a box."""
    x, y = box
    if side == 2:
        x, y = y, x
    return min((y * (l - 1)).lo, (x - y * (l - 1)).lo, (y * (l + 1) - x).lo)


def project(l: int, side: int, v):
    """``p1(v) = (v.h1)(l,1)`` or ``p2(v) = (v.h2)(1,l)``."""
    h1, h2 = dual_basis(l)
    h = h1 if side == 1 else h2
    c = core.rat(v[0]) * h[0] + core.rat(v[1]) * h[1]
    r = ray(l, side)
    return (c * r[0], c * r[1])


def project_enclosure(l: int, side: int, box):
    h1, h2 = dual_basis(l)
    h = h1 if side == 1 else h2
    c = box[0] * h[0] + box[1] * h[1]
    r = ray(l, side)
    return (c * r[0], c * r[1])


def build_test_sets(v1: Sequence[int], v2: Sequence[int], s1: Sequence[int], s2: Sequence[int],
                    m: int, l: int) -> TestSets:
    """Test vectors exactly as listed in the splitting statement.

    ``F1 = [w1] + [s1(i) e_i - m w1] + [(m+1) w1 - s1(i) e_i] + [w1 + m l w2, w1 - m l w2]``
    with ``w1 = l v1 + v2``, ``w2 = v1 + l v2``; ``F2`` swaps the roles.
    """
    n = len(v1)
    if not (len(v2) == len(s1) == len(s2) == n):
        raise core.ShapeMismatch("v1, v2, s1, s2 must have equal lengths")
    w1 = tuple(l * a + b for a, b in zip(v1, v2))
    w2 = tuple(a + l * b for a, b in zip(v1, v2))

    def family(w, w_other, s):
        out = [w]
        for i in range(n):
            out.append(tuple(s[i] * (k == i) - m * w[k] for k in range(n)))
        for i in range(n):
            out.append(tuple((m + 1) * w[k] - s[i] * (k == i) for k in range(n)))
        out.append(tuple(a + m * l * b for a, b in zip(w, w_other)))
        out.append(tuple(a - m * l * b for a, b in zip(w, w_other)))
        return tuple(out)

    return TestSets(family(w1, w2, s1), family(w2, w1, s2))


def derived_test_sets(v1: Sequence[int], v2: Sequence[int], s1: Sequence[int], s2: Sequence[int],
                      m: int, l: int) -> TestSets:
    """Test vectors whose images the splitting construction actually controls.

    ``F1 = [w1] + [s1(i) e_i - w1] + [(m+1) w1 - m s1(i) e_i] + [w1 + m l w2, w1 - m l w2]``.
    These are the elements shown to lie in the cone by the containment
    argument; they yield the entry bounds ``s^-2 K sigma <= B <= s^3 K sigma``.
    """
    n = len(v1)
    if not (len(v2) == len(s1) == len(s2) == n):
        raise core.ShapeMismatch("v1, v2, s1, s2 must have equal lengths")
    w1 = tuple(l * a + b for a, b in zip(v1, v2))
    w2 = tuple(a + l * b for a, b in zip(v1, v2))

    def family(w, w_other, s):
        out = [w]
        for i in range(n):
            out.append(tuple(s[i] * (k == i) - w[k] for k in range(n)))
        for i in range(n):
            out.append(tuple((m + 1) * w[k] - m * s[i] * (k == i) for k in range(n)))
        out.append(tuple(a + m * l * b for a, b in zip(w, w_other)))
        out.append(tuple(a - m * l * b for a, b in zip(w, w_other)))
        return tuple(out)

    return TestSets(family(w1, w2, s1), family(w2, w1, s2))


def element_in_G_cone(p, e, l: int, side: int, precision: int | None = None):
    """Membership of a group element in ``G(l, side) = {0} u sigma^-1(C(l, side))``."""
    from .diagram import sigma, sigma_best
    from .errors import PrecisionExhausted

    _check_l(l)
    if not any(e.vector):
        return True
    try:
        box = sigma(p, e, precision)
    except PrecisionExhausted:
        box = sigma_best(p, e)
    if all(iv.is_point() and iv.lo == 0 for iv in box):
        from .diagram import GroupElement, equal

        zero = GroupElement(e.level, (0,) * len(e.vector))
        if equal(p, e, zero) is True:
            return True
    verdict = contains_enclosure(l, side, box)
    if verdict is Undecided and precision is not None:
        verdict = contains_enclosure(l, side, sigma_best(p, e))
    return verdict
