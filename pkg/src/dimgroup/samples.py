"""Random block diagrams satisfying the block conditions, and their flattening.

Generation fixes ``(r_n, l_n, K_n)`` level by level.  Boundary vectors at
level 1 are sampled inside their bands; each later level is obtained from
the recursion, with the rows of the four blocks solved (as rationals, then
rounded) so that the new boundary vectors land near chosen targets: ``u^{1,1}``
and ``u^{2,2}`` near ``K'``, ``l' u^{1,2}`` and ``l' u^{2,1}`` near
``-K' (1 + 0.6 (r' - 1))``.  The rounding error is of order ``J K``, so
``K'`` is taken large compared to ``J K l' / (r' - 1)``.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction

from . import core
from .diagram import BratteliDiagramPrefix, Presentation
from .errors import GenerationFailed, InvalidInput
from .verifier import BlockDiagram, BlockLevel, ParamSchedule, check_all

TEMPLATES = ("harmonic", "geometric", "fast")


def r_schedule(template, levels: int) -> tuple:
    """``harmonic``: ``1 + 1/(n+1)``; ``geometric``: ``1 + 2^-n``; ``fast``: ``1 + 2^-(2^n - 1)``."""
    if not isinstance(template, str):
        rs = tuple(core.rat(x) for x in template)
        if len(rs) < levels:
            raise InvalidInput(f"explicit r-schedule needs {levels} values")
        return rs[:levels]
    if template == "harmonic":
        return tuple(1 + Fraction(1, n + 1) for n in range(1, levels + 1))
    if template == "geometric":
        return tuple(1 + Fraction(1, 2 ** n) for n in range(1, levels + 1))
    if template == "fast":
        return tuple(1 + Fraction(1, 2 ** (2 ** n - 1)) for n in range(1, levels + 1))
    raise InvalidInput(f"unknown schedule template {template!r}; use one of {TEMPLATES}")


@dataclass(frozen=True)
class GenSpec:
    seed: int = 1
    levels: int = 4
    j_max: int = 2
    schedule: object = "harmonic"
    retries: int = 50

    def __post_init__(self):
        if self.levels < 1:
            raise InvalidInput("levels must be >= 1")
        if self.j_max < 1:
            raise InvalidInput("j_max must be >= 1")


def _jitter(rng: random.Random, eps: Fraction, lo: float, hi: float) -> Fraction:
    """``1 + eps * U(lo, hi)`` with a rational uniform draw on a 1/1024 grid."""
    k = rng.randint(0, 1024)
    return 1 + eps * (Fraction(lo) + Fraction(k, 1024) * (Fraction(hi) - Fraction(lo)))


def _first_units(rng, J, K, l, eps):
    u11 = tuple(round(K * _jitter(rng, eps, -0.1, 0.1)) for _ in range(J))
    u22 = tuple(round(K * _jitter(rng, eps, -0.1, 0.1)) for _ in range(J))
    u12 = tuple(-round(K * _jitter(rng, eps, 0.5, 0.7) / l) for _ in range(J))
    u21 = tuple(-round(K * _jitter(rng, eps, 0.5, 0.7) / l) for _ in range(J))
    return (u11, u12, u21, u22)


def _solve_row(ua, ub, wa, wb, target_a, target_b):
    """Scalars ``(p, q)`` with ``sum p w_a ua + q w_b ub`` hitting both targets.

    ``ua``/``ub`` are pairs of boundary vectors (for ``u^1`` and ``u^2``) in the
    first/second block; ``wa``/``wb`` are the per-column perturbation weights.
    """
    a11 = sum(w * x for w, x in zip(wa, ua[0]))
    a12 = sum(w * x for w, x in zip(wb, ub[0]))
    a21 = sum(w * x for w, x in zip(wa, ua[1]))
    a22 = sum(w * x for w, x in zip(wb, ub[1]))
    det = a11 * a22 - a12 * a21
    if det == 0:
        return None
    p = (target_a * a22 - a12 * target_b) / det
    q = (a11 * target_b - a21 * target_a) / det
    return p, q


def _next_level(rng, J, units, r, l, K, r_next, j_max):
    eps, eps_next = r - 1, r_next - 1
    u11, u12, u21, u22 = units
    l_next = max(l + 1, math.ceil(4 * l * r_next / eps))
    K_next = math.ceil(24 * J * K * l_next / eps_next) + rng.randint(0, J * K)
    J_next = rng.randint(1, j_max)
    rows = {b: [] for b in ("A11", "A12", "A21", "A22")}
    for _ in range(J_next):
        wa = [_jitter(rng, eps, -1 / 16, 1 / 16) for _ in range(J)]
        wb = [_jitter(rng, eps, -1 / 16, 1 / 16) for _ in range(J)]
        t11 = K_next * _jitter(rng, eps_next, -0.1, 0.1)
        t21 = -K_next * _jitter(rng, eps_next, 0.5, 0.7) / l_next
        top = _solve_row((u11, u21), (u12, u22), wa, wb, t11, t21)
        wc = [_jitter(rng, eps, -1 / 16, 1 / 16) for _ in range(J)]
        wd = [_jitter(rng, eps, -1 / 16, 1 / 16) for _ in range(J)]
        t12 = -K_next * _jitter(rng, eps_next, 0.5, 0.7) / l_next
        t22 = K_next * _jitter(rng, eps_next, -0.1, 0.1)
        bottom = _solve_row((u11, u21), (u12, u22), wc, wd, t12, t22)
        if top is None or bottom is None:
            return None
        rows["A11"].append(tuple(round(top[0] * w) for w in wa))
        rows["A12"].append(tuple(round(top[1] * w) for w in wb))
        rows["A21"].append(tuple(round(bottom[0] * w) for w in wc))
        rows["A22"].append(tuple(round(bottom[1] * w) for w in wd))
    lvl = BlockLevel(*(tuple(rows[b]) for b in ("A11", "A12", "A21", "A22")))
    big = lvl.block_matrix()
    v1 = core.mat_vec(big, u11 + u12)
    v2 = core.mat_vec(big, u21 + u22)
    nxt = (v1[:J_next], v1[J_next:], v2[:J_next], v2[J_next:])
    return J_next, lvl, nxt, l_next, K_next


def _row_scale(lvl: BlockLevel, r) -> int | None:
    sums = [sum(row) for row in lvl.A11] + [sum(row) for row in lvl.A22]
    M = math.ceil(Fraction(max(sums)) / r)
    if M > r * min(sums):
        return None
    return max(M, 4)


def generate(spec: GenSpec) -> tuple[BlockDiagram, ParamSchedule]:
    """Deterministic (per seed) block diagram passing all block checks."""
    rng = random.Random(spec.seed)
    rs = r_schedule(spec.schedule, spec.levels)
    for x in rs:
        if not 1 < x < 2:
            raise InvalidInput(f"r values must lie in (1, 2), got {x}")
    if any(b >= a for a, b in zip(rs, rs[1:])):
        raise InvalidInput("r-schedule must be strictly decreasing")
    J = rng.randint(1, spec.j_max)
    eps = rs[0] - 1
    l = 4 + rng.randint(0, 2)
    K = max(4, math.ceil(8 * l / eps)) + rng.randint(0, 8)
    sizes, mats, units = [J], [], [_first_units(rng, J, K, l, eps)]
    ls, Ks, Ms, As = [l], [K], [], []
    for n in range(1, spec.levels):
        last = None
        for _ in range(spec.retries):
            out = _next_level(rng, J, units[-1], rs[n - 1], l, K, rs[n], spec.j_max)
            if out is None:
                last = "singular row system"
                continue
            J2, lvl, nxt, l2, K2 = out
            M = _row_scale(lvl, rs[n - 1])
            if M is None:
                last = "row sums outside the M band"
                continue
            if Ms and M < Ms[-1]:
                last = "M not increasing"
                continue
            a = min(min(min(row) for row in lvl.A12), min(min(row) for row in lvl.A21))
            trial_bd = BlockDiagram((J, J2), (lvl,), (units[-1], nxt))
            trial_s = ParamSchedule(rs[n - 1:n + 1], (K, K2), (l, l2), (M,), (a,))
            report = check_all(trial_bd, trial_s)
            if report.passed:
                break
            last = ", ".join(sorted(report.failed_conditions()))
        else:
            raise GenerationFailed(
                f"level {n + 1}: no valid level after {spec.retries} tries ({last})",
                level=n + 1,
                constraint=last,
            )
        sizes.append(J2)
        mats.append(lvl)
        units.append(nxt)
        ls.append(l2)
        Ks.append(K2)
        Ms.append(M)
        As.append(a)
        J, l, K = J2, l2, K2
    bd = BlockDiagram(tuple(sizes), tuple(mats), tuple(units))
    sched = ParamSchedule(rs, tuple(Ks), tuple(ls), tuple(Ms), tuple(As))
    return bd, sched


def flatten(bd: BlockDiagram, sched: ParamSchedule) -> Presentation:
    """Plain presentation with ``I_n = 2 J_n`` and limit-mode state rows."""
    from .states import limit_oracle

    diagram = BratteliDiagramPrefix(
        tuple(2 * j for j in bd.sizes), tuple(lvl.block_matrix() for lvl in bd.matrices)
    )
    u1 = tuple(bd.unit_vector(n, 1) for n in range(1, bd.levels + 1))
    u2 = tuple(bd.unit_vector(n, 2) for n in range(1, bd.levels + 1))
    return Presentation(diagram, u1, u2, limit_oracle(bd, sched), {"source": "flattened block diagram"})
