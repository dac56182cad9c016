"""Exact arithmetic substrate: rationals, integer matrices, rational intervals
and the planar lattice routines (reduction, closest point, Diophantine solve).

Matrices are tuples of row tuples of Python ints; vectors are tuples.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from fractions import Fraction
from math import gcd, isqrt
from typing import Iterable, Sequence, Tuple

from .errors import BigIntLimitExceeded, DegenerateBasis, NoSolution, ShapeMismatch

Rat = Fraction
IntVec = Tuple[int, ...]
IntMat = Tuple[Tuple[int, ...], ...]
IntVec2 = Tuple[int, int]
RatVec2 = Tuple[Fraction, Fraction]

BITS_ENV = "DGF_MAX_BIGINT_BITS"


def rat(x) -> Fraction:
    """Coerce an int, Fraction or ``"p/q"`` string to a canonical Fraction."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(x, (int, str)):
        return Fraction(x)
    raise TypeError(f"cannot convert {type(x).__name__} to an exact rational")


def bit_limit() -> int | None:
    raw = os.environ.get(BITS_ENV)
    if not raw:
        return None
    return int(raw)


def guard_bits(values: Iterable[int], limit: int | None = None) -> None:
    """Raise BigIntLimitExceeded if any integer exceeds the configured bit cap."""
    if limit is None:
        limit = bit_limit()
        if limit is None:
            return
    for v in values:
        if v.bit_length() > limit:
            raise BigIntLimitExceeded(
                f"integer of {v.bit_length()} bits exceeds {BITS_ENV}={limit}",
                bits=v.bit_length(),
                limit=limit,
            )


# ---------------------------------------------------------------- matrices


def as_mat(rows) -> IntMat:
    m = tuple(tuple(int(x) for x in row) for row in rows)
    if m and any(len(r) != len(m[0]) for r in m):
        raise ShapeMismatch("ragged matrix")
    return m


def shape(a: IntMat) -> tuple[int, int]:
    return (len(a), len(a[0]) if a else 0)


def identity(n: int) -> IntMat:
    return tuple(tuple(1 if i == j else 0 for j in range(n)) for i in range(n))


def zeros(rows: int, cols: int) -> IntMat:
    return tuple((0,) * cols for _ in range(rows))


def transpose(a: IntMat) -> IntMat:
    return tuple(zip(*a)) if a else ()


def mat_mul(a: IntMat, b: IntMat) -> IntMat:
    """Exact product ``a @ b``."""
    ra, ca = shape(a)
    rb, cb = shape(b)
    if ca != rb:
        raise ShapeMismatch(f"cannot multiply {ra}x{ca} by {rb}x{cb}")
    bt = transpose(b)
    out = tuple(tuple(sum(x * y for x, y in zip(row, col)) for col in bt) for row in a)
    limit = bit_limit()
    if limit is not None:
        for row in out:
            guard_bits(row, limit)
    return out


def mat_vec(a, x: Sequence) -> tuple:
    """``a @ x`` for integer or rational vectors."""
    if a and len(a[0]) != len(x):
        raise ShapeMismatch(f"matrix has {len(a[0])} columns, vector has {len(x)} entries")
    out = tuple(sum(p * q for p, q in zip(row, x)) for row in a)
    limit = bit_limit()
    if limit is not None and all(isinstance(v, int) for v in out):
        guard_bits(out, limit)
    return out


def vec_mat(x: Sequence, a) -> tuple:
    """Row vector times matrix, ``x @ a``."""
    if len(x) != len(a):
        raise ShapeMismatch(f"row vector of length {len(x)} against {len(a)} rows")
    cols = len(a[0]) if a else 0
    return tuple(sum(x[i] * a[i][j] for i in range(len(a))) for j in range(cols))


def mat_add(a: IntMat, b: IntMat) -> IntMat:
    if shape(a) != shape(b):
        raise ShapeMismatch(f"cannot add {shape(a)} and {shape(b)}")
    return tuple(tuple(x + y for x, y in zip(r, s)) for r, s in zip(a, b))


def mat_scale(c, a):
    return tuple(tuple(c * x for x in row) for row in a)


def hstack(a: IntMat, b: IntMat) -> IntMat:
    if len(a) != len(b):
        raise ShapeMismatch("hstack needs equal row counts")
    return tuple(r + s for r, s in zip(a, b))


def vstack(a: IntMat, b: IntMat) -> IntMat:
    if a and b and len(a[0]) != len(b[0]):
        raise ShapeMismatch("vstack needs equal column counts")
    return tuple(a) + tuple(b)


def block(a11: IntMat, a12: IntMat, a21: IntMat, a22: IntMat) -> IntMat:
    return vstack(hstack(a11, a12), hstack(a21, a22))


def column(a, j: int) -> tuple:
    return tuple(row[j] for row in a)


def diag(entries: Sequence[int]) -> IntMat:
    n = len(entries)
    return tuple(tuple(entries[i] if i == j else 0 for j in range(n)) for i in range(n))


def vec_add(x, y) -> tuple:
    if len(x) != len(y):
        raise ShapeMismatch("vector lengths differ")
    return tuple(a + b for a, b in zip(x, y))


def vec_sub(x, y) -> tuple:
    if len(x) != len(y):
        raise ShapeMismatch("vector lengths differ")
    return tuple(a - b for a, b in zip(x, y))


def vec_scale(c, x) -> tuple:
    return tuple(c * a for a in x)


def dot(x, y):
    if len(x) != len(y):
        raise ShapeMismatch("vector lengths differ")
    return sum(a * b for a, b in zip(x, y))


def unit(n: int, i: int) -> IntVec:
    return tuple(1 if k == i else 0 for k in range(n))


# ---------------------------------------------------------------- intervals


@dataclass(frozen=True)
class RatInterval:
    """Closed interval ``[lo, hi]`` with exact rational endpoints."""

    lo: Fraction
    hi: Fraction

    def __post_init__(self):
        lo, hi = rat(self.lo), rat(self.hi)
        if lo > hi:
            raise ValueError(f"empty interval [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def point(cls, x) -> "RatInterval":
        x = rat(x)
        return cls(x, x)

    @classmethod
    def hull(cls, *values) -> "RatInterval":
        vs = [rat(v) for v in values]
        return cls(min(vs), max(vs))

    @property
    def width(self) -> Fraction:
        return self.hi - self.lo

    @property
    def mid(self) -> Fraction:
        return (self.lo + self.hi) / 2

    def is_point(self) -> bool:
        return self.lo == self.hi

    def contains(self, x) -> bool:
        return self.lo <= x <= self.hi

    def intersects(self, other: "RatInterval") -> bool:
        return self.lo <= other.hi and other.lo <= self.hi

    def intersection(self, other: "RatInterval") -> "RatInterval":
        return RatInterval(max(self.lo, other.lo), min(self.hi, other.hi))

    def subset_of(self, other: "RatInterval") -> bool:
        return other.lo <= self.lo and self.hi <= other.hi

    def positive(self) -> bool:
        return self.lo > 0

    def negative(self) -> bool:
        return self.hi < 0

    def __add__(self, other):
        if isinstance(other, RatInterval):
            return RatInterval(self.lo + other.lo, self.hi + other.hi)
        other = rat(other)
        return RatInterval(self.lo + other, self.hi + other)

    __radd__ = __add__

    def __neg__(self):
        return RatInterval(-self.hi, -self.lo)

    def __sub__(self, other):
        if isinstance(other, RatInterval):
            return RatInterval(self.lo - other.hi, self.hi - other.lo)
        other = rat(other)
        return RatInterval(self.lo - other, self.hi - other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, RatInterval):
            ps = (self.lo * other.lo, self.lo * other.hi, self.hi * other.lo, self.hi * other.hi)
            return RatInterval(min(ps), max(ps))
        c = rat(other)
        return RatInterval(min(c * self.lo, c * self.hi), max(c * self.lo, c * self.hi))

    __rmul__ = __mul__

    def __str__(self) -> str:
        return f"[{self.lo}, {self.hi}]"


def interval_dot(coeffs: Sequence, intervals: Sequence[RatInterval]) -> RatInterval:
    """Enclosure of ``sum c_i x_i`` for exact ``c_i`` and enclosed ``x_i``."""
    if len(coeffs) != len(intervals):
        raise ShapeMismatch("coefficient and interval counts differ")
    lo = Fraction(0)
    hi = Fraction(0)
    for c, iv in zip(coeffs, intervals):
        if c >= 0:
            lo += c * iv.lo
            hi += c * iv.hi
        else:
            lo += c * iv.hi
            hi += c * iv.lo
    return RatInterval(lo, hi)


# ---------------------------------------------------------------- planar lattices


def _norm2(v) -> int:
    return v[0] * v[0] + v[1] * v[1]


def _det2(a, b) -> int:
    return a[0] * b[1] - a[1] * b[0]


def round_half_down(q) -> int:
    """Nearest integer, ties toward negative infinity (deterministic)."""
    return ceil_rat(rat(q) - Fraction(1, 2))


def _nearest(q: Fraction) -> int:
    return round_half_down(q)


def gauss_reduce(b1, b2):
    """Lagrange reduction of a planar integer basis.

    Returns ``(c1, c2)`` spanning the same lattice with ``|c1| <= |c2|`` and
    ``|<c1,c2>| <= |c1|^2 / 2``.
    """
    b1 = (int(b1[0]), int(b1[1]))
    b2 = (int(b2[0]), int(b2[1]))
    if _det2(b1, b2) == 0:
        raise DegenerateBasis(f"vectors {b1} and {b2} are linearly dependent")
    if _norm2(b1) > _norm2(b2):
        b1, b2 = b2, b1
    while True:
        q = _nearest(Fraction(b1[0] * b2[0] + b1[1] * b2[1], _norm2(b1)))
        b2 = (b2[0] - q * b1[0], b2[1] - q * b1[1])
        if _norm2(b2) >= _norm2(b1):
            return b1, b2
        b1, b2 = b2, b1


def _reduce_with_transform(b1, b2):
    """Lagrange reduction that also returns the integer change of basis.

    The returned ``t`` satisfies ``c_k = t[k][0] * b1 + t[k][1] * b2``.
    """
    if _det2(b1, b2) == 0:
        raise DegenerateBasis(f"vectors {b1} and {b2} are linearly dependent")
    t1, t2 = (1, 0), (0, 1)
    if _norm2(b1) > _norm2(b2):
        b1, b2, t1, t2 = b2, b1, t2, t1
    while True:
        q = _nearest(Fraction(b1[0] * b2[0] + b1[1] * b2[1], _norm2(b1)))
        b2 = (b2[0] - q * b1[0], b2[1] - q * b1[1])
        t2 = (t2[0] - q * t1[0], t2[1] - q * t1[1])
        if _norm2(b2) >= _norm2(b1):
            return (b1, b2), (t1, t2)
        b1, b2, t1, t2 = b2, b1, t2, t1


def _int_range(center: Fraction, radius_sq: Fraction) -> range:
    """Integers ``k`` with ``(k - center)^2 <= radius_sq`` (a superset is fine)."""
    r = isqrt(int(radius_sq) + 1) + 1
    c = int(center // 1)
    return range(c - r, c + r + 2)


def closest_coefficients(basis, target) -> IntVec2:
    """Coefficients ``(a, b)`` of a lattice point nearest to ``target``.

    Among equally near points the lexicographically smallest coefficient pair
    (with respect to the given basis) is returned.
    """
    b1 = (int(basis[0][0]), int(basis[0][1]))
    b2 = (int(basis[1][0]), int(basis[1][1]))
    tx, ty = rat(target[0]), rat(target[1])
    (c1, c2), (t1, t2) = _reduce_with_transform(b1, b2)

    def dist2(a, b):
        px = a * c1[0] + b * c2[0] - tx
        py = a * c1[1] + b * c2[1] - ty
        return px * px + py * py

    # Babai rounding in the reduced basis gives an initial radius.
    d = _det2(c1, c2)
    ra = (tx * c2[1] - ty * c2[0]) / d
    rb = (c1[0] * ty - c1[1] * tx) / d
    best_r2 = dist2(_nearest(ra), _nearest(rb))
    # Gram-Schmidt for c2 against c1, then bound b, then a.
    n1 = _norm2(c1)
    mu = Fraction(c1[0] * c2[0] + c1[1] * c2[1], n1)
    g2 = (c2[0] - mu * c1[0], c2[1] - mu * c1[1])
    g2n = g2[0] * g2[0] + g2[1] * g2[1]
    # component of target along g2
    cb = (tx * g2[0] + ty * g2[1]) / g2n
    candidates = []
    for b in _int_range(cb, best_r2 / g2n):
        rem = best_r2 - (b - cb) ** 2 * g2n
        if rem < 0:
            continue
        # remaining offset along c1
        ca = ((tx - b * c2[0]) * c1[0] + (ty - b * c2[1]) * c1[1]) / n1
        for a in _int_range(ca, rem / n1):
            r2 = dist2(a, b)
            if r2 <= best_r2:
                if r2 < best_r2:
                    candidates = []
                    best_r2 = r2
                candidates.append((a, b))
    # map reduced coefficients back to the caller's basis
    orig = []
    for a, b in candidates:
        orig.append((a * t1[0] + b * t2[0], a * t1[1] + b * t2[1]))
    return min(orig)


def closest_point(basis, target) -> IntVec2:
    """Lattice point of ``span_Z(basis)`` nearest to a rational target."""
    a, b = closest_coefficients(basis, target)
    b1, b2 = basis
    return (a * b1[0] + b * b2[0], a * b1[1] + b * b2[1])


def _xgcd(a: int, b: int) -> tuple[int, int, int]:
    x0, x1, y0, y1 = 1, 0, 0, 1
    while b:
        q, a, b = a // b, b, a % b
        x0, x1 = x1, x0 - q * x1
        y0, y1 = y1, y0 - q * y1
    return a, x0, y0


def column_hermite(m) -> tuple[list[list[int]], list[list[int]], list[int]]:
    """Unimodular column reduction of an integer matrix.

    Returns ``(h, u, pivots)`` with ``m @ u = h``, ``u`` unimodular and ``h``
    in column echelon form: row ``pivots[k]`` is the first row where column
    ``k`` is nonzero, pivots strictly increase, and pivot entries are positive.
    """
    rows = len(m)
    cols = len(m[0]) if rows else 0
    h = [list(map(int, r)) for r in m]
    u = [[1 if i == j else 0 for j in range(cols)] for i in range(cols)]

    def colop(dst, src, k):  # col dst += k * col src
        for r in h:
            r[dst] += k * r[src]
        for r in u:
            r[dst] += k * r[src]

    def colcomb(i, j, a, b, c, d):  # (ci, cj) <- (a ci + b cj, c ci + d cj)
        for r in h:
            r[i], r[j] = a * r[i] + b * r[j], c * r[i] + d * r[j]
        for r in u:
            r[i], r[j] = a * r[i] + b * r[j], c * r[i] + d * r[j]

    pivots: list[int] = []
    k = 0
    for row in range(rows):
        if k >= cols:
            break
        for j in range(k + 1, cols):
            a, b = h[row][k], h[row][j]
            if b == 0:
                continue
            g, x, y = _xgcd(a, b)
            # new col k = x*ck + y*cj has entry g; new col j has entry 0
            colcomb(k, j, x, y, -b // g, a // g)
        if h[row][k] == 0:
            continue
        if h[row][k] < 0:
            for r in h:
                r[k] = -r[k]
            for r in u:
                r[k] = -r[k]
        # reduce entries left of the pivot into [0, pivot)
        p = h[row][k]
        for j in range(k):
            q = h[row][j] // p
            if q:
                colop(j, k, -q)
        pivots.append(row)
        k += 1
    return h, u, pivots


def solve_diophantine(m, t):
    """Integer solution ``x`` of ``m @ x = t`` or ``NoSolution``."""
    rows = len(m)
    cols = len(m[0]) if rows else 0
    if len(t) != rows:
        raise ShapeMismatch(f"target has {len(t)} entries, matrix has {rows} rows")
    h, u, pivots = column_hermite(m)
    y = [0] * cols
    rank = len(pivots)
    for r in range(rows):
        acc = int(t[r]) - sum(h[r][k] * y[k] for k in range(rank) if pivots[k] < r)
        if r in pivots:
            k = pivots.index(r)
            if acc % h[r][k]:
                return NoSolution
            y[k] = acc // h[r][k]
        elif acc != 0:
            return NoSolution
    x = tuple(sum(u[i][k] * y[k] for k in range(cols)) for i in range(cols))
    return x


def column_lattice_basis(m) -> list[tuple[int, ...]]:
    """A basis (as columns) of the integer column lattice of ``m``."""
    h, _, pivots = column_hermite(m)
    return [tuple(row[k] for row in h) for k in range(len(pivots))]


def lcm(*values: int) -> int:
    out = 1
    for v in values:
        out = out * v // gcd(out, v)
    return out


def ceil_div(a: int, b: int) -> int:
    return -((-a) // b)


def floor_rat(q) -> int:
    q = rat(q)
    return q.numerator // q.denominator


def ceil_rat(q) -> int:
    q = rat(q)
    return -((-q.numerator) // q.denominator)


# ---------------------------------------------------------------- integer feasibility


def _propagate(constraints, box):
    """Tighten integer bounds against ``lo <= c.x <= hi`` constraints; None if empty."""
    box = list(box)
    changed = True
    rounds = 0
    while changed and rounds < 64:
        changed = False
        rounds += 1
        for coeffs, lo, hi in constraints:
            smin = smax = 0
            for c, (a, b) in zip(coeffs, box):
                if c >= 0:
                    smin += c * a
                    smax += c * b
                else:
                    smin += c * b
                    smax += c * a
            if (lo is not None and smax < lo) or (hi is not None and smin > hi):
                return None
            for i, (c, (a, b)) in enumerate(zip(coeffs, box)):
                if c == 0:
                    continue
                own_min, own_max = (c * a, c * b) if c > 0 else (c * b, c * a)
                rest_min, rest_max = smin - own_min, smax - own_max
                # c * x_i must lie in [lo - rest_max, hi - rest_min]
                t_lo = None if lo is None else lo - rest_max
                t_hi = None if hi is None else hi - rest_min
                if c < 0:
                    t_lo, t_hi = t_hi, t_lo
                t_lo = None if t_lo is None else Fraction(t_lo) / c
                t_hi = None if t_hi is None else Fraction(t_hi) / c
                na = a if t_lo is None else max(a, ceil_rat(t_lo))
                nb = b if t_hi is None else min(b, floor_rat(t_hi))
                if na > nb:
                    return None
                if (na, nb) != (a, b):
                    box[i] = (na, nb)
                    changed = True
                    smin = smax = 0
                    for cc, (aa, bb) in zip(coeffs, box):
                        if cc >= 0:
                            smin += cc * aa
                            smax += cc * bb
                        else:
                            smin += cc * bb
                            smax += cc * aa
    return box


def branch_and_prune(constraints, bounds, max_nodes: int = 100000):
    """Integer point satisfying bounded linear constraints, or ``NoSolution``.

    ``constraints`` holds ``(coeffs, lo, hi)`` triples meaning
    ``lo <= sum coeffs[i] x[i] <= hi`` (either side may be None) and ``bounds``
    holds finite integer ranges ``(lo, hi)`` per variable.  Depth-first
    bisection of the widest range with bound propagation at every node; the
    lower half is explored first, so the result is deterministic.
    """
    from .errors import SearchExhausted

    for a, b in bounds:
        if a is None or b is None:
            raise ValueError("branch_and_prune needs finite variable bounds")
    stack = [[(int(a), int(b)) for a, b in bounds]]
    nodes = 0
    while stack:
        nodes += 1
        if nodes > max_nodes:
            raise SearchExhausted(f"integer search stopped after {max_nodes} nodes", nodes=max_nodes)
        box = _propagate(constraints, stack.pop())
        if box is None:
            continue
        widths = [b - a for a, b in box]
        k = max(range(len(box)), key=lambda i: widths[i]) if box else 0
        if not box or widths[k] == 0:
            x = tuple(a for a, _ in box)
            if all(
                (lo is None or dot(c, x) >= lo) and (hi is None or dot(c, x) <= hi)
                for c, lo, hi in constraints
            ):
                return x
            continue
        a, b = box[k]
        mid = (a + b) // 2
        upper = list(box)
        upper[k] = (mid + 1, b)
        lower = list(box)
        lower[k] = (a, mid)
        stack.append(upper)
        stack.append(lower)
    return NoSolution
