"""Command-line front end.

Exit codes: 0 success or pass, 1 verification failure, 2 usage or parse
error, 3 search, precision or size-cap exhaustion.  Contract failures are
reported on stderr as one JSON object, never as a traceback.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction

from . import __version__, fileformat
from .diagram import telescope, validate
from .errors import DimGroupError, InvalidInput
from .report import FAIL, PASS, UNDECIDED, Report, ReportItem, compare
from .samples import TEMPLATES, GenSpec, flatten, generate
from .verifier import check_all, replay, truncate

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_EXHAUSTED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _read(path: str, expect=None):
    try:
        if path == "-":
            text = sys.stdin.read()
        else:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
    except OSError as e:
        raise InvalidInput(f"cannot read {path}: {e.strerror}") from None
    return fileformat.loads(text, expect)


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InvalidInput(f"expected comma-separated integers, got {text!r}") from None


def _rats(text: str) -> list[Fraction]:
    try:
        return [Fraction(x) for x in text.split(",") if x.strip()]
    except (ValueError, ZeroDivisionError):
        raise InvalidInput(f"expected comma-separated rationals, got {text!r}") from None


def _verdict_code(rep: Report) -> int:
    return {PASS: EXIT_OK, FAIL: EXIT_FAIL, UNDECIDED: EXIT_EXHAUSTED}[rep.overall]


# ---------------------------------------------------------------- subcommands


def cmd_verify(args) -> int:
    kind, obj = _read(args.file)
    if kind == "block":
        bd, sched = obj
        if args.horizon is not None:
            bd, sched = truncate(bd, sched, min(args.horizon, bd.levels))
        rep = check_all(bd, sched)
    elif kind == "presentation":
        rep = validate(obj, args.horizon)
    elif kind == "certificate":
        items = []
        for it in obj.all_items():
            # 1 == 1 when re-evaluation reproduces the stored verdict
            items.append(compare("replay", it.level, (it.condition,) + tuple(it.indices), int(replay(it)), 1, "=="))
            items.append(it)
        rep = Report(tuple(items), len(obj.stages), "certificate")
    else:
        rep = obj
    _emit(fileformat.dumps("report", rep), args.out)
    return _verdict_code(rep)


def _parse_element(text: str):
    try:
        level, rest = text.split(":", 1)
        left, right = rest.split("|", 1)
        return int(level), _ints(left), _ints(right)
    except ValueError:
        raise InvalidInput(f"element must look like n:x1,x2|y1,y2, got {text!r}") from None


def cmd_states(args) -> int:
    from .states import evaluate, positive_element

    kind, obj = _read(args.file, ("block",))
    bd, sched = obj
    level, x1, x2 = _parse_element(args.element)
    try:
        width = Fraction(args.width)
    except (ValueError, ZeroDivisionError):
        raise InvalidInput(f"bad width {args.width!r}") from None
    if width <= 0:
        raise InvalidInput("width must be positive")
    x = positive_element(bd, level, x1, x2)
    depth = args.max_depth if args.max_depth is not None else bd.levels - level
    res = evaluate(bd, sched, x, width, depth)
    items = []
    for name, iv in (("sigma1", res.sigma1), ("sigma2", res.sigma2)):
        verdict = PASS if iv.width <= width else UNDECIDED
        items.append(ReportItem(name, level, ("width",), (iv.lo, iv.hi), width, "<=", verdict))
    notes = (f"depth {res.depth}", f"C {x.C}")
    rep = Report(tuple(items), level + res.depth, "states", notes)
    _emit(fileformat.dumps("report", rep), args.out)
    return EXIT_EXHAUSTED if res.exhausted else EXIT_OK


def cmd_construct(args) -> int:
    from .constructor import PipelineConfig, run_pipeline

    _, p = _read(args.file, ("presentation",))
    r = tuple(_rats(args.r))
    a = tuple(_ints(args.a)) if args.a else ()
    kw = {}
    if args.precision is not None:
        kw["max_precision"] = args.precision
    try:
        cfg = PipelineConfig(r=r, a=a, stages=args.stages, max_level=args.max_level, **kw)
    except ValueError as e:
        raise InvalidInput(str(e)) from None
    bd, sched, bundle = run_pipeline(p, cfg)
    block = fileformat.dumps("block", (bd, sched))
    cert = fileformat.dumps("certificate", bundle)
    cert_path = args.cert
    if cert_path is None and args.out:
        cert_path = args.out[:-5] + ".cert.json" if args.out.endswith(".json") else args.out + ".cert.json"
    if args.out:
        _emit(block, args.out)
    if cert_path:
        _emit(cert, cert_path)
    if not args.out:
        # one envelope per line when streaming
        sys.stdout.write(json.dumps(json.loads(block)) + "\n")
        if not cert_path:
            sys.stdout.write(json.dumps(json.loads(cert)) + "\n")
    return EXIT_OK if bundle.passed else EXIT_FAIL


def cmd_generate(args) -> int:
    schedule = args.schedule
    if schedule not in TEMPLATES:
        schedule = tuple(_rats(schedule))
    bd, sched = generate(GenSpec(seed=args.seed, levels=args.levels, j_max=args.jmax, schedule=schedule))
    _emit(fileformat.dumps("block", (bd, sched)), args.out)
    return EXIT_OK


def cmd_flatten(args) -> int:
    _, (bd, sched) = _read(args.file, ("block",))
    _emit(fileformat.dumps("presentation", flatten(bd, sched)), args.out)
    return EXIT_OK


def cmd_telescope(args) -> int:
    kind, obj = _read(args.file, ("presentation", "block"))
    p = flatten(*obj) if kind == "block" else obj
    _emit(fileformat.dumps("presentation", telescope(p, _ints(args.cuts))), args.out)
    return EXIT_OK


def _max_bits(values) -> int:
    return max((abs(int(v)).bit_length() for v in values), default=0)


def cmd_info(args) -> int:
    kind, obj = _read(args.file)
    info = {"kind": kind, "version": fileformat.VERSION}
    if kind == "block":
        bd, sched = obj
        entries = [x for lvl in bd.matrices for b in ("A11", "A12", "A21", "A22") for row in getattr(lvl, b) for x in row]
        info.update(levels=bd.levels, sizes=list(bd.sizes), max_entry_bits=_max_bits(entries),
                    K_bits=[k.bit_length() for k in sched.K], r=[str(x) for x in sched.r])
    elif kind == "presentation":
        d = obj.diagram
        entries = [x for a in d.matrices for row in a for x in row]
        info.update(levels=d.levels, sizes=list(d.sizes), max_entry_bits=_max_bits(entries),
                    state_mode=obj.states.mode)
    elif kind == "report":
        info.update(title=obj.title, overall=obj.overall, items=len(obj.items),
                    failed=sorted(obj.failed_conditions()))
    else:
        info.update(stages=len(obj.stages), items=sum(1 for _ in obj.all_items()), passed=obj.passed,
                    levels=[[st.level, st.next_level] for st in obj.stages])
    _emit(json.dumps(info, indent=1), args.out)
    return EXIT_OK


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="dimgroup", description="Exact tools for two-state dimension groups in block form.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=fn)
        sp.add_argument("--out", help="write the result to this path instead of stdout")
        return sp

    sp = add("verify", cmd_verify, "check a block diagram, presentation or certificate")
    sp.add_argument("file")
    sp.add_argument("--horizon", type=int)
    sp = add("states", cmd_states, "enclose both states of a positive element of a block diagram")
    sp.add_argument("file")
    sp.add_argument("--element", required=True, help="n:x1,x2,...|y1,y2,...")
    sp.add_argument("--width", required=True, help="target width p/q")
    sp.add_argument("--max-depth", type=int)
    sp = add("construct", cmd_construct, "factor a presentation into block form")
    sp.add_argument("file")
    sp.add_argument("--r", required=True, help="r-schedule r1,r2,...")
    sp.add_argument("--a", default="", help="a-schedule a1,a2,...")
    sp.add_argument("--max-level", type=int)
    sp.add_argument("--precision", type=int)
    sp.add_argument("--stages", type=int)
    sp.add_argument("--cert", help="certificate path (default: next to --out)")
    sp = add("generate", cmd_generate, "random block diagram passing all block checks")
    sp.add_argument("--seed", type=int, default=1)
    sp.add_argument("--levels", type=int, default=4)
    sp.add_argument("--jmax", type=int, default=2)
    sp.add_argument("--schedule", default="harmonic", help=f"one of {', '.join(TEMPLATES)} or r1,r2,...")
    sp = add("flatten", cmd_flatten, "plain presentation of a block diagram")
    sp.add_argument("file")
    sp = add("telescope", cmd_telescope, "restrict a presentation to the given levels")
    sp.add_argument("file")
    sp.add_argument("--cuts", required=True)
    sp = add("info", cmd_info, "summary of any file")
    sp.add_argument("file")
    return ap


def _fail(code: int, kind: str, message: str, **extra) -> int:
    doc = {"error": kind, "message": message, "exit_code": code}
    doc.update({k: str(v) for k, v in extra.items()})
    sys.stderr.write(json.dumps(doc) + "\n")
    return code


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        return _fail(EXIT_USAGE, "usage", str(e))
    if getattr(args, "command", None) is None:
        return _fail(EXIT_USAGE, "usage", "a subcommand is required")
    try:
        return args.func(args)
    except DimGroupError as e:
        code = getattr(e, "exit_code", EXIT_FAIL)
        extra = {k: v for k, v in getattr(e, "diagnostics", {}).items() if k != "bundle"}
        return _fail(code, type(e).__name__, str(e), **extra)
    except (ValueError, TypeError) as e:
        return _fail(EXIT_USAGE, "invalid input", str(e))


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
