"""JSON envelopes for presentations, block diagrams, reports and certificates.

Every file is ``{"kind": ..., "version": 1, "payload": ...}``.  Integers and
rationals inside payloads are strings (``"123"``, ``"-7/9"``) so nothing is
lost in transport; matrices are row-major lists of lists.  Small structural
counts (levels, indices, versions) stay JSON integers.  Unknown fields are
rejected.
"""

from __future__ import annotations

import json
import sys
from fractions import Fraction

from . import core
from .constructor import CertBundle, StageRecord
from .diagram import BratteliDiagramPrefix, ExactStateOracle, Presentation, RestrictedStateOracle
from .errors import InvalidInput, ShapeMismatch
from .report import Report, ReportItem
from .verifier import BLOCKS, BlockDiagram, BlockLevel, ParamSchedule

VERSION = 1

# payload integers run to many thousands of digits; the size cap is
# DGF_MAX_BIGINT_BITS, not the interpreter's string-conversion limit
if hasattr(sys, "set_int_max_str_digits"):
    sys.set_int_max_str_digits(0)
KINDS = ("presentation", "block", "report", "certificate")


# ---------------------------------------------------------------- scalars


def enc_int(x: int) -> str:
    core.guard_bits((int(x),))
    return str(int(x))


def dec_int(s) -> int:
    if not isinstance(s, str):
        raise InvalidInput(f"expected an integer string, got {s!r}")
    try:
        v = int(s)
    except ValueError:
        raise InvalidInput(f"not an integer: {s!r}") from None
    core.guard_bits((v,))
    return v


def enc_rat(x) -> str:
    x = core.rat(x)
    core.guard_bits((x.numerator, x.denominator))
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def dec_rat(s) -> Fraction:
    if not isinstance(s, str):
        raise InvalidInput(f"expected a rational string, got {s!r}")
    try:
        x = Fraction(s)
    except (ValueError, ZeroDivisionError):
        raise InvalidInput(f"not a rational: {s!r}") from None
    core.guard_bits((x.numerator, x.denominator))
    return x


def enc_vec(v) -> list:
    return [enc_int(x) for x in v]


def dec_vec(v) -> tuple:
    if not isinstance(v, list):
        raise InvalidInput("expected a list of integer strings")
    return tuple(dec_int(x) for x in v)


def enc_mat(m) -> list:
    return [enc_vec(row) for row in m]


def dec_mat(m) -> tuple:
    if not isinstance(m, list):
        raise InvalidInput("expected a matrix as a list of rows")
    return tuple(dec_vec(row) for row in m)


def _fields(obj, required, optional=()):
    if not isinstance(obj, dict):
        raise InvalidInput("expected a JSON object")
    extra = set(obj) - set(required) - set(optional)
    if extra:
        raise InvalidInput(f"unknown fields: {sorted(extra)}")
    missing = [k for k in required if k not in obj]
    if missing:
        raise InvalidInput(f"missing fields: {missing}")
    return obj


def _small_int(x, what):
    if isinstance(x, bool) or not isinstance(x, int):
        raise InvalidInput(f"{what} must be a JSON integer")
    return x


# ---------------------------------------------------------------- block diagrams


def enc_schedule(s: ParamSchedule) -> dict:
    return {
        "r": [enc_rat(x) for x in s.r],
        "K": enc_vec(s.K),
        "l": enc_vec(s.l),
        "M": None if s.M is None else enc_vec(s.M),
        "a": None if s.a is None else enc_vec(s.a),
    }


def dec_schedule(d) -> ParamSchedule:
    _fields(d, ("r", "K", "l"), ("M", "a"))
    M, a = d.get("M"), d.get("a")
    return ParamSchedule(
        tuple(dec_rat(x) for x in d["r"]),
        dec_vec(d["K"]),
        dec_vec(d["l"]),
        None if M is None else dec_vec(M),
        None if a is None else dec_vec(a),
    )


def enc_block(bd: BlockDiagram, sched: ParamSchedule) -> dict:
    return {
        "sizes": list(bd.sizes),
        "levels": [{b: enc_mat(getattr(lvl, b)) for b in BLOCKS} for lvl in bd.matrices],
        "units": [[enc_vec(v) for v in u4] for u4 in bd.units],
        "schedule": enc_schedule(sched),
    }


def dec_block(d):
    _fields(d, ("sizes", "levels", "units", "schedule"))
    sizes = tuple(_small_int(x, "size") for x in d["sizes"])
    levels = []
    for lvl in d["levels"]:
        _fields(lvl, BLOCKS)
        levels.append(BlockLevel(*(dec_mat(lvl[b]) for b in BLOCKS)))
    units = tuple(tuple(dec_vec(v) for v in u4) for u4 in d["units"])
    return BlockDiagram(sizes, tuple(levels), units), dec_schedule(d["schedule"])


# ---------------------------------------------------------------- presentations


def enc_states(states) -> dict:
    if isinstance(states, ExactStateOracle):
        return {
            "mode": "exact",
            "rows": [[[enc_rat(x) for x in row] for row in rows] for rows in states.values],
        }
    if isinstance(states, RestrictedStateOracle):
        return {"mode": "restricted", "cuts": list(states.cuts), "base": enc_states(states.base)}
    source = getattr(states, "source", None)
    if isinstance(source, tuple) and source and source[0] == "block":
        return {"mode": "block", "block": enc_block(source[1], source[2])}
    raise InvalidInput(f"cannot serialize a state oracle of type {type(states).__name__}")


def dec_states(d):
    if not isinstance(d, dict) or "mode" not in d:
        raise InvalidInput("state data needs a mode")
    mode = d["mode"]
    if mode == "exact":
        _fields(d, ("mode", "rows"))
        return ExactStateOracle([[[dec_rat(x) for x in row] for row in rows] for rows in d["rows"]])
    if mode == "restricted":
        _fields(d, ("mode", "cuts", "base"))
        return RestrictedStateOracle(dec_states(d["base"]), [_small_int(c, "cut") for c in d["cuts"]])
    if mode == "block":
        from .states import limit_oracle

        _fields(d, ("mode", "block"))
        return limit_oracle(*dec_block(d["block"]))
    raise InvalidInput(f"unknown state mode {mode!r}")


def enc_presentation(p: Presentation) -> dict:
    return {
        "sizes": list(p.diagram.sizes),
        "matrices": [enc_mat(a) for a in p.diagram.matrices],
        "u1": [enc_vec(v) for v in p.u1],
        "u2": [enc_vec(v) for v in p.u2],
        "states": enc_states(p.states),
        "flags": {str(k): str(v) for k, v in p.flags.items()},
    }


def dec_presentation(d) -> Presentation:
    _fields(d, ("sizes", "matrices", "u1", "u2", "states"), ("flags",))
    flags = d.get("flags", {})
    if not isinstance(flags, dict) or not all(isinstance(v, str) for v in flags.values()):
        raise InvalidInput("flags must map names to strings")
    diagram = BratteliDiagramPrefix(
        tuple(_small_int(x, "size") for x in d["sizes"]), tuple(dec_mat(a) for a in d["matrices"])
    )
    return Presentation(
        diagram,
        tuple(dec_vec(v) for v in d["u1"]),
        tuple(dec_vec(v) for v in d["u2"]),
        dec_states(d["states"]),
        dict(flags),
    )


# ---------------------------------------------------------------- reports and certificates


def _enc_value(x):
    if isinstance(x, tuple):
        return [_enc_value(v) for v in x]
    return enc_rat(x)


def _dec_value(x):
    if isinstance(x, list):
        return tuple(_dec_value(v) for v in x)
    return dec_rat(x)


def _enc_index(x):
    if isinstance(x, (int, str)) and not isinstance(x, bool):
        return x
    return str(x)


def enc_item(it: ReportItem) -> dict:
    return {
        "condition": it.condition,
        "level": it.level,
        "indices": [_enc_index(x) for x in it.indices],
        "lhs": _enc_value(it.lhs),
        "rhs": _enc_value(it.rhs),
        "relation": it.relation,
        "verdict": it.verdict,
    }


def dec_item(d) -> ReportItem:
    _fields(d, ("condition", "level", "indices", "lhs", "rhs", "relation", "verdict"))
    try:
        return ReportItem(
            d["condition"],
            _small_int(d["level"], "level"),
            tuple(d["indices"]),
            _dec_value(d["lhs"]),
            _dec_value(d["rhs"]),
            d["relation"],
            d["verdict"],
        )
    except ValueError as e:
        raise InvalidInput(str(e)) from None


def enc_report(rep: Report) -> dict:
    return {
        "title": rep.title,
        "horizon": rep.horizon,
        "overall": rep.overall,
        "notes": list(rep.notes),
        "items": [enc_item(it) for it in rep.items],
    }


def dec_report(d) -> Report:
    _fields(d, ("title", "horizon", "items"), ("overall", "notes"))
    rep = Report(
        tuple(dec_item(x) for x in d["items"]),
        _small_int(d["horizon"], "horizon"),
        d["title"],
        tuple(d.get("notes", ())),
    )
    if "overall" in d and d["overall"] != rep.overall:
        raise InvalidInput(f"stored verdict {d['overall']!r} does not match the items ({rep.overall!r})")
    return rep


_STAGE_INTS = ("index", "level", "next_level")
_STAGE_BIG = ("m", "l", "K")
_STAGE_MATS = ("B1", "B2", "C1", "C2")


def enc_stage(st: StageRecord) -> dict:
    out = {k: getattr(st, k) for k in _STAGE_INTS}
    out.update({k: enc_int(getattr(st, k)) for k in _STAGE_BIG})
    out.update({k: enc_mat(getattr(st, k)) for k in _STAGE_MATS})
    out["items"] = [enc_item(it) for it in st.items]
    return out


def dec_stage(d) -> StageRecord:
    _fields(d, _STAGE_INTS + _STAGE_BIG + _STAGE_MATS + ("items",))
    kw = {k: _small_int(d[k], k) for k in _STAGE_INTS}
    kw.update({k: dec_int(d[k]) for k in _STAGE_BIG})
    kw.update({k: dec_mat(d[k]) for k in _STAGE_MATS})
    kw["items"] = tuple(dec_item(x) for x in d["items"])
    return StageRecord(**kw)


def enc_certificate(b: CertBundle) -> dict:
    return {
        "stages": [enc_stage(st) for st in b.stages],
        "final": enc_report(b.final),
        "iteration": [enc_report(r) for r in b.iteration],
        "notes": list(b.notes),
    }


def dec_certificate(d) -> CertBundle:
    _fields(d, ("stages", "final"), ("iteration", "notes"))
    return CertBundle(
        tuple(dec_stage(x) for x in d["stages"]),
        dec_report(d["final"]),
        tuple(dec_report(x) for x in d.get("iteration", ())),
        tuple(d.get("notes", ())),
    )


# ---------------------------------------------------------------- envelopes

_ENCODERS = {
    "presentation": enc_presentation,
    "block": lambda x: enc_block(*x),
    "report": enc_report,
    "certificate": enc_certificate,
}
_DECODERS = {
    "presentation": dec_presentation,
    "block": dec_block,
    "report": dec_report,
    "certificate": dec_certificate,
}


def envelope(kind: str, obj) -> dict:
    """Wrap an object; ``block`` objects are ``(BlockDiagram, ParamSchedule)`` pairs."""
    if kind not in KINDS:
        raise InvalidInput(f"unknown kind {kind!r}")
    return {"kind": kind, "version": VERSION, "payload": _ENCODERS[kind](obj)}


def open_envelope(doc, expect=None):
    """``(kind, object)`` from a parsed envelope, checking kind and version first."""
    _fields(doc, ("kind", "version", "payload"))
    kind, version = doc["kind"], doc["version"]
    if kind not in KINDS:
        raise InvalidInput(f"unknown kind {kind!r}")
    if version != VERSION:
        raise InvalidInput(f"unsupported version {version!r} (expected {VERSION})")
    if expect is not None and kind not in expect:
        raise InvalidInput(f"expected a {' or '.join(expect)} file, got {kind}")
    try:
        return kind, _DECODERS[kind](doc["payload"])
    except (TypeError, KeyError, AttributeError, ValueError, ShapeMismatch) as e:
        raise InvalidInput(f"malformed {kind} payload: {e}") from None


def dumps(kind: str, obj) -> str:
    return json.dumps(envelope(kind, obj), indent=1)


def loads(text: str, expect=None):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise InvalidInput(f"invalid JSON: {e}") from None
    return open_envelope(doc, expect)
