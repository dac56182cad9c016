"""Itemized pass/fail reports shared by the validators and the verifier."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

PASS = "pass"
FAIL = "fail"
UNDECIDED = "undecided"

_RELATIONS = ("<=", "<", "==")


def _norm(x):
    if isinstance(x, Fraction) and x.denominator == 1:
        return int(x.numerator)
    return x


@dataclass(frozen=True)
class ReportItem:
    """One checked comparison ``lhs <relation> rhs``.

    ``indices`` names the matrix/vector positions involved; ``lhs`` and ``rhs``
    are exact values (ints or Fractions), or ``(lo, hi)`` enclosures when the
    comparison was decided through intervals.
    """

    condition: str
    level: int
    indices: tuple
    lhs: object
    rhs: object
    relation: str
    verdict: str

    def __post_init__(self):
        if self.relation not in _RELATIONS:
            raise ValueError(f"unknown relation {self.relation!r}")
        object.__setattr__(self, "lhs", _norm(self.lhs))
        object.__setattr__(self, "rhs", _norm(self.rhs))

    @property
    def ok(self) -> bool:
        return self.verdict == PASS


def compare(condition: str, level: int, indices, lhs, rhs, relation: str = "<=") -> ReportItem:
    """Evaluate an exact comparison and wrap it as a report item."""
    if relation == "<=":
        ok = lhs <= rhs
    elif relation == "<":
        ok = lhs < rhs
    else:
        ok = lhs == rhs
    return ReportItem(condition, level, tuple(indices), lhs, rhs, relation, PASS if ok else FAIL)


@dataclass(frozen=True)
class Report:
    """Ordered collection of checked items; ``overall`` is derived from them."""

    items: tuple = ()
    horizon: int = 0
    title: str = ""
    notes: tuple = field(default_factory=tuple)

    @property
    def overall(self) -> str:
        verdicts = {item.verdict for item in self.items}
        if FAIL in verdicts:
            return FAIL
        if UNDECIDED in verdicts:
            return UNDECIDED
        return PASS

    @property
    def passed(self) -> bool:
        return self.overall == PASS

    def failures(self) -> list[ReportItem]:
        return [item for item in self.items if item.verdict == FAIL]

    def failed_conditions(self) -> set[str]:
        return {item.condition for item in self.failures()}

    def by_condition(self, condition: str) -> list[ReportItem]:
        return [item for item in self.items if item.condition == condition]


def merge(reports: Iterable[Report], title: str = "") -> Report:
    reports = list(reports)
    items: list[ReportItem] = []
    notes: list[str] = []
    horizon = 0
    for r in reports:
        items.extend(r.items)
        notes.extend(r.notes)
        horizon = max(horizon, r.horizon)
    items.sort(key=lambda it: (it.level, it.condition, it.indices))
    return Report(tuple(items), horizon, title, tuple(notes))


def sort_items(items: Iterable[ReportItem]) -> tuple:
    return tuple(sorted(items, key=lambda it: (it.level, it.condition, it.indices)))
