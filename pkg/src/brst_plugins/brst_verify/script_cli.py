"""Scene scripts and the brst-verify command line.

A script declares scenes, shifts and dresses them, and asks for checks:

    scene g = gr(dim=4);   # comments run to the end of the line
    shift g;
    dress g with vielbein;
    check suite g;
    check "gr.v_hat_zero" in g;
    report md "gr.md";

Parsing resolves every scene name; execution builds each scene once, runs the
requested checks through the engine and merges the per-scene reports.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field, replace
from typing import Any, Dict, FrozenSet, List, NamedTuple, Optional, Sequence, Tuple

from arpeggio import EOF, NoMatch, Optional as Opt, ParserPython, PTNodeVisitor
from arpeggio import RegExMatch as _
from arpeggio import ZeroOrMore, visit_parse_tree

try:
    from .brst_engine import (
        Check,
        CheckSettings,
        build_yang_mills_scene,
        scene_checker,
        yang_mills_checks,
    )
    from .geometry_conformal import (
        build_conformal_scene,
        conformal_checker,
        conformal_checks,
    )
    from .geometry_gr import build_gr_scene, gr_checks
    from .graded_core import BrstError
    from .matrix_forms import EtaMetric
    from .reports import RunReport, emit_report, trace_lines, verdict_line
except ImportError:
    from brst_engine import (
        Check,
        CheckSettings,
        build_yang_mills_scene,
        scene_checker,
        yang_mills_checks,
    )
    from geometry_conformal import (
        build_conformal_scene,
        conformal_checker,
        conformal_checks,
    )
    from geometry_gr import build_gr_scene, gr_checks
    from graded_core import BrstError
    from matrix_forms import EtaMetric
    from reports import RunReport, emit_report, trace_lines, verdict_line

logger = logging.getLogger(__name__)

Value = Any


class Span(NamedTuple):
    line: int
    column: int


class ScriptError(BrstError):
    """Lexical, syntactic, name-resolution or execution error at a script position."""

    def __init__(self, message: str, span: Optional[Span] = None):
        self.message = message
        self.span = span
        where = f"line {span.line}, column {span.column}: " if span else ""
        super().__init__(where + message)

    @property
    def line(self) -> Optional[int]:
        return self.span.line if self.span else None

    @property
    def column(self) -> Optional[int]:
        return self.span.column if self.span else None


# AST

NO_SPAN = Span(0, 0)


@dataclass(frozen=True)
class SceneDecl:
    name: str
    kind: str
    options: Tuple[Tuple[str, Value], ...] = ()
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class ShiftDirective:
    scene: str
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class DressDirective:
    scene: str
    dressing: str
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class RuleDecl:
    """Postulated sigma-rule of a dressing field: `lie` or `tensorial`."""

    scene: str
    target: str
    law: str
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class CheckDirective:
    """`identity` is None for the whole suite of the scene."""

    scene: str
    identity: Optional[str] = None
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class ReportDirective:
    fmt: str
    path: str
    span: Span = field(default=NO_SPAN, compare=False)


Statement = Any


@dataclass(frozen=True)
class ScriptAst:
    statements: Tuple[Statement, ...]

    def scenes(self) -> List[SceneDecl]:
        return [s for s in self.statements if isinstance(s, SceneDecl)]


# Grammar

KEYWORDS = (
    "scene",
    "shift",
    "dress",
    "with",
    "rule",
    "sigma",
    "check",
    "suite",
    "in",
    "report",
    "true",
    "false",
)
SCENE_KINDS = ("gr", "conformal", "yang_mills")
REPORT_FORMATS = ("json", "md")
LAWS = ("lie", "tensorial")


def comment():
    return _(r"#[^\n]*")


def ident():
    return _(r"(?!(%s)\b)[A-Za-z_][A-Za-z0-9_]*" % "|".join(KEYWORDS))


def string():
    return _(r'"[^"\\\n]*"')


def number():
    return _(r"-?\d+")


def boolean():
    return _(r"(true|false)\b")


def value():
    return [number, boolean, string, ident]


def kvpair():
    return ident, "=", value


def kvpairs():
    return Opt(kvpair, ZeroOrMore(",", kvpair))


def scene_kind():
    return _(r"(%s)\b" % "|".join(SCENE_KINDS))


def scene_decl():
    return "scene", ident, "=", scene_kind, "(", kvpairs, ")"


def shift_directive():
    return "shift", ident


def dress_directive():
    return "dress", ident, "with", ident


def law():
    return _(r"(%s)\b" % "|".join(LAWS))


def rule_decl():
    return "rule", ident, "sigma", ident, "=", law


def check_directive():
    return "check", [("suite", ident), (string, "in", ident)]


def report_format():
    return _(r"(%s)\b" % "|".join(REPORT_FORMATS))


def report_directive():
    return "report", report_format, string


def statement():
    return [
        scene_decl,
        shift_directive,
        dress_directive,
        rule_decl,
        check_directive,
        report_directive,
    ], ";"


def script():
    return statement, ZeroOrMore(statement), EOF


class Token(NamedTuple):
    text: Value
    span: Span


class ScriptVisitor(PTNodeVisitor):
    """Turns the parse tree into ScriptAst nodes; tokens keep their spans."""

    def __init__(self, parser: ParserPython):
        super().__init__()
        self.parser = parser

    def span(self, node) -> Span:
        return Span(*self.parser.pos_to_linecol(node.position))

    def token(self, node, text: Value) -> Token:
        return Token(text, self.span(node))

    @staticmethod
    def parts(children) -> List[Any]:
        # plain keyword and punctuation matches carry no information
        return [c for c in children if not isinstance(c, str)]

    def visit_ident(self, node, children):
        return self.token(node, node.value)

    def visit_string(self, node, children):
        return self.token(node, node.value[1:-1])

    def visit_number(self, node, children):
        return self.token(node, int(node.value))

    def visit_boolean(self, node, children):
        return self.token(node, node.value == "true")

    visit_scene_kind = visit_ident
    visit_law = visit_ident
    visit_report_format = visit_ident

    def visit_value(self, node, children):
        return self.parts(children)[0]

    def visit_kvpair(self, node, children):
        key, val = self.parts(children)
        return (key, val)

    def visit_kvpairs(self, node, children):
        return [tuple(c) for c in self.parts(children)]

    def visit_scene_decl(self, node, children):
        parts = self.parts(children)
        name, kind = parts[0], parts[1]
        pairs = parts[2] if len(parts) > 2 else []
        seen = set()
        for key, _val in pairs:
            if key.text in seen:
                raise ScriptError(f"duplicate option '{key.text}'", key.span)
            seen.add(key.text)
        options = tuple((key.text, val.text) for key, val in pairs)
        return SceneDecl(name.text, kind.text, options, name.span), [name]

    def visit_shift_directive(self, node, children):
        (name,) = self.parts(children)
        return ShiftDirective(name.text, self.span(node)), [name]

    def visit_dress_directive(self, node, children):
        name, dressing = self.parts(children)
        return DressDirective(name.text, dressing.text, self.span(node)), [name]

    def visit_rule_decl(self, node, children):
        name, target, rule_law = self.parts(children)
        item = RuleDecl(name.text, target.text, rule_law.text, self.span(node))
        return item, [name]

    def visit_check_directive(self, node, children):
        parts = self.parts(children)
        if len(parts) == 1:
            return CheckDirective(parts[0].text, None, self.span(node)), parts
        identity, name = parts
        return CheckDirective(name.text, identity.text, self.span(node)), [name]

    def visit_report_directive(self, node, children):
        fmt, path = self.parts(children)
        return ReportDirective(fmt.text, path.text, self.span(node)), []

    def visit_statement(self, node, children):
        return self.parts(children)[0]

    def visit_script(self, node, children):
        return self.parts(children)


_PARSER: Optional[ParserPython] = None


def _parser() -> ParserPython:
    global _PARSER
    if _PARSER is None:
        _PARSER = ParserPython(script, comment, autokwd=True)
    return _PARSER


def _resolve(statements: Sequence[Tuple[Statement, List[Token]]]) -> None:
    defined = set()
    for item, names in statements:
        if isinstance(item, SceneDecl):
            if item.name in defined:
                raise ScriptError(f"scene '{item.name}' already defined", item.span)
            defined.add(item.name)
            continue
        for name in names:
            if name.text not in defined:
                raise ScriptError(f"undefined scene '{name.text}'", name.span)


def parse_script(text: str) -> ScriptAst:
    """Parse and name-resolve a script; the first error raises ScriptError."""
    parser = _parser()
    try:
        tree = parser.parse(text)
    except NoMatch as e:
        line, column = parser.pos_to_linecol(e.position)
        message = str(e).split(" at position")[0]
        raise ScriptError(f"syntax error: {message}", Span(line, column)) from e
    statements = visit_parse_tree(tree, ScriptVisitor(parser))
    _resolve(statements)
    return ScriptAst(tuple(item for item, _names in statements))


def _value_text(value: Value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    return f'"{value}"'


def print_statement(item: Statement) -> str:
    if isinstance(item, SceneDecl):
        options = ", ".join(f"{k}={_value_text(v)}" for k, v in item.options)
        return f"scene {item.name} = {item.kind}({options});"
    if isinstance(item, ShiftDirective):
        return f"shift {item.scene};"
    if isinstance(item, DressDirective):
        return f"dress {item.scene} with {item.dressing};"
    if isinstance(item, RuleDecl):
        return f"rule {item.scene} sigma {item.target} = {item.law};"
    if isinstance(item, CheckDirective):
        if item.identity is None:
            return f"check suite {item.scene};"
        return f'check "{item.identity}" in {item.scene};'
    if isinstance(item, ReportDirective):
        return f'report {item.fmt} "{item.path}";'
    raise TypeError(f"not a script statement: {item!r}")


def print_script(ast: ScriptAst) -> str:
    return "".join(print_statement(item) + "\n" for item in ast.statements)


# Execution

SCENE_OPTIONS: Dict[str, Dict[str, type]] = {
    "gr": {"dim": int, "eta": str, "jet_order": int},
    "conformal": {"dim": int, "normal": bool, "eta": str, "jet_order": int},
    "yang_mills": {"size": int, "dim": int, "matter": bool, "jet_order": int},
}

DRESSINGS = {
    "gr": ("vielbein",),
    "conformal": ("u", "u1", "u0"),
    "yang_mills": ("u",),
}

ETA = {"minkowski": EtaMetric.minkowski, "euclidean": EtaMetric.euclidean}


class ExecuteOptions(NamedTuple):
    settings: CheckSettings
    faults: FrozenSet[str] = frozenset()
    write_reports: bool = True


@dataclass
class SceneState:
    decl: SceneDecl
    shifted: bool = False
    dressings: List[str] = field(default_factory=list)
    law: Optional[str] = None
    scene: Any = None
    checks: Optional[List[Check]] = None
    selected: List[Check] = field(default_factory=list)

    @property
    def kind(self) -> str:
        return self.decl.kind

    def option(self, key: str, default: Value = None) -> Value:
        return dict(self.decl.options).get(key, default)


def _validate_options(decl: SceneDecl) -> None:
    schema = SCENE_OPTIONS[decl.kind]
    for key, val in decl.options:
        if key not in schema:
            raise ScriptError(f"{decl.kind} scene has no option '{key}'", decl.span)
        expected = schema[key]
        if expected is int and (isinstance(val, bool) or not isinstance(val, int)):
            raise ScriptError(f"option '{key}' expects an integer", decl.span)
        if expected is not int and not isinstance(val, expected):
            raise ScriptError(
                f"option '{key}' expects a {expected.__name__}", decl.span
            )
        if key == "eta" and val not in ETA:
            raise ScriptError(f"unknown eta convention '{val}'", decl.span)


def _build(state: SceneState) -> None:
    if state.checks is not None:
        return
    dim = state.option("dim")
    jet_order = state.option("jet_order")
    eta = ETA[state.option("eta", "minkowski")](dim or 4)
    if state.kind == "gr":
        state.scene = build_gr_scene(dim or 4, eta, jet_order)
        state.checks = gr_checks(state.scene)
    elif state.kind == "conformal":
        state.scene = build_conformal_scene(
            dim or 4, state.option("normal", False), eta, jet_order
        )
        state.checks = conformal_checks(state.scene)
    else:
        dressing = None
        if state.dressings:
            dressing = "tensorial" if state.law == "tensorial" else "commuting"
        state.scene = build_yang_mills_scene(
            state.option("size", 2),
            dim or 2,
            state.option("matter", True),
            dressing,
            jet_order=jet_order,
        )
        state.checks = yang_mills_checks(state.scene, dressing)


def _apply(item: Statement, states: Dict[str, SceneState]) -> None:
    if isinstance(item, SceneDecl):
        _validate_options(item)
        states[item.name] = SceneState(item)
        return
    state = states[item.scene]
    if isinstance(item, ShiftDirective):
        state.shifted = True
    elif isinstance(item, RuleDecl):
        if state.kind != "yang_mills" or item.target != "u":
            raise ScriptError(
                f"no postulated sigma-rule for '{item.target}' in a {state.kind} scene",
                item.span,
            )
        if state.checks is not None:
            raise ScriptError("rules must precede the first check", item.span)
        state.law = item.law
    elif isinstance(item, DressDirective):
        if item.dressing not in DRESSINGS[state.kind]:
            raise ScriptError(
                f"{state.kind} scene cannot be dressed with '{item.dressing}'",
                item.span,
            )
        if state.checks is not None:
            raise ScriptError("dressings must precede the first check", item.span)
        if item.dressing == "u0" and "u1" not in state.dressings:
            raise ScriptError(
                f"dressing u0 needs 'dress {item.scene} with u1' first", item.span
            )
        state.dressings.append(item.dressing)
    elif isinstance(item, CheckDirective):
        _select(item, state)


def _select(item: CheckDirective, state: SceneState) -> None:
    if not state.shifted:
        raise ScriptError(f"check needs 'shift {item.scene}' first", item.span)
    if state.kind != "yang_mills" and not state.dressings:
        raise ScriptError(f"check needs 'dress {item.scene}' first", item.span)
    try:
        _build(state)
    except ScriptError:
        raise
    except BrstError as e:
        raise ScriptError(str(e), item.span) from e
    if item.identity is None:
        wanted = state.checks
    else:
        wanted = [c for c in state.checks if c.identity_id == item.identity]
        if not wanted:
            raise ScriptError(
                f"unknown identity '{item.identity}' for scene '{item.scene}'",
                item.span,
            )
    chosen = {c.identity_id for c in state.selected}
    state.selected += [c for c in wanted if c.identity_id not in chosen]


def settings_record(options: ExecuteOptions) -> Dict[str, Any]:
    settings = options.settings
    return {
        "seed": settings.seed,
        "mode": settings.mode,
        "trials": settings.trials,
        "faults": sorted(options.faults),
    }


def _run_scene(name: str, state: SceneState, options: ExecuteOptions) -> RunReport:
    if state.kind == "conformal":
        checker = conformal_checker(state.scene, options.settings, options.faults)
    else:
        checker = scene_checker(state.scene, options.settings, options.faults)
    metadata = dict(state.scene.metadata())
    metadata.update(name=name, kind=state.kind, dressing=",".join(state.dressings))
    try:
        identities = checker.run(state.selected)
    except BrstError as e:
        raise ScriptError(f"scene '{name}': {e}", state.decl.span) from e
    return RunReport(metadata, settings_record(options), identities)


def execute_script(ast: ScriptAst, options: ExecuteOptions) -> RunReport:
    """Run the directives in order; reports are merged across scenes."""
    states: Dict[str, SceneState] = {}
    for item in ast.statements:
        _apply(item, states)
    runs = [
        _run_scene(name, state, options)
        for name, state in states.items()
        if state.selected
    ]
    if not runs:
        report = RunReport({"scenes": []}, settings_record(options))
    else:
        report = runs[0]
        for other in runs[1:]:
            report = report.merge(other)
    if options.write_reports:
        for item in ast.statements:
            if isinstance(item, ReportDirective):
                write_report(report, item.fmt, item.path)
    return report


def write_report(report: RunReport, fmt: str, path: str) -> None:
    try:
        with open(path, "w", encoding="utf-8") as stream:
            emit_report(report, fmt, stream)
    except OSError as e:
        raise BrstError(f"cannot write report {path}: {e}") from e
    logger.info("%s report written to %s", fmt, path)


def override_scenes(
    ast: ScriptAst,
    dim: Optional[int] = None,
    normal: bool = False,
    jet_order: Optional[int] = None,
) -> ScriptAst:
    """Apply command-line scene options over the declarations of a script."""
    statements = []
    for item in ast.statements:
        if isinstance(item, SceneDecl):
            options = dict(item.options)
            if dim is not None:
                options["dim"] = dim
            if jet_order is not None:
                options["jet_order"] = jet_order
            if normal:
                if item.kind != "conformal":
                    raise ScriptError(
                        f"--normal applies to conformal scenes, not '{item.name}'",
                        item.span,
                    )
                options["normal"] = True
            item = replace(item, options=tuple(options.items()))
        statements.append(item)
    return ScriptAst(tuple(statements))


# Built-in scripts

BUILTIN_KINDS = ("gr", "conformal", "ym")


def builtin_script(
    kind: str,
    dim: Optional[int] = None,
    normal: bool = False,
    jet_order: Optional[int] = None,
) -> str:
    options = []
    if kind == "ym":
        options += ["size=2", f"dim={dim or 2}", "matter=true"]
    else:
        options.append(f"dim={dim or 4}")
    if kind == "conformal":
        options.append(f"normal={_value_text(normal)}")
    if jet_order is not None:
        options.append(f"jet_order={jet_order}")
    args = ", ".join(options)
    if kind == "gr":
        return (
            f"scene g = gr({args});\nshift g;\n"
            "dress g with vielbein;\ncheck suite g;\n"
        )
    if kind == "conformal":
        return (
            f"scene c = conformal({args});\nshift c;\n"
            "dress c with u1;\ndress c with u0;\ncheck suite c;\n"
        )
    if kind == "ym":
        return (
            f"scene y = yang_mills({args});\nshift y;\n"
            "rule y sigma u = lie;\ndress y with u;\ncheck suite y;\n"
        )
    raise BrstError(f"unknown built-in script '{kind}'")


def builtin_checks(
    identity_id: str, dim: Optional[int] = None, normal: bool = False
) -> Tuple[Check, Dict[str, Any]]:
    """Find an identity among the built-in suites; conformal ids may need normal."""
    prefix = identity_id.split(".", 1)[0]
    kinds = {"gr": ["gr"], "conf": ["conformal"], "ym": ["ym"]}.get(prefix)
    if kinds is None:
        raise BrstError(f"unknown identity '{identity_id}'")
    variants = [normal, not normal] if prefix == "conf" else [normal]
    for flag in variants:
        text = builtin_script(kinds[0], dim, flag)
        states: Dict[str, SceneState] = {}
        for item in parse_script(text).statements:
            if not isinstance(item, CheckDirective):
                _apply(item, states)
        (state,) = states.values()
        _build(state)
        for item in state.checks:
            if item.identity_id == identity_id:
                return item, state.scene.metadata()
    raise BrstError(f"unknown identity '{identity_id}'")


def explain(identity_id: str, dim: Optional[int] = None, normal: bool = False) -> str:
    item, metadata = builtin_checks(identity_id, dim, normal)
    tier = 2 if item.needs_oracle else 1
    how = "exact point evaluation" if tier == 2 else "normal form"
    lines = [
        f"{item.identity_id}",
        f"  anchor:  {item.anchor}",
        f"  formula: {item.formula}",
        f"  tier:    {tier} ({how})",
        f"  scene:   {metadata['scene']} (dim={metadata['dim']})",
    ]
    if item.note:
        lines.append(f"  note:    {item.note}")
    return "\n".join(lines)


# Command line


def _parser_args() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--dim", type=int, help="base dimension m of the scene")
    common.add_argument("--normal", action="store_true", help="normal conformal")
    common.add_argument("--jet-order", type=int, help="jet truncation order")
    common.add_argument("--seed", help="base seed of randomized trials")
    common.add_argument(
        "--mode", choices=["symbolic", "randomized", "both"], default="symbolic"
    )
    common.add_argument("--trials", type=int, help="randomized trials per identity")
    common.add_argument("--report", help="write the run report to this path")
    common.add_argument("--format", choices=REPORT_FORMATS, default="json")
    common.add_argument("--trace", action="store_true", help="dump oracle trials")
    common.add_argument(
        "--inject-fault",
        action="append",
        default=[],
        metavar="IDENTITY",
        help="replace one side of an identity by a wrong display",
    )
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(
        prog="brst-verify",
        description="Verify BRST identities of shifted and dressed Cartan geometries.",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    verify = commands.add_parser("verify", parents=[common], help="built-in suite")
    verify.add_argument("suite", choices=BUILTIN_KINDS)
    run = commands.add_parser("run", parents=[common], help="run a scene script")
    run.add_argument("file")
    explain_cmd = commands.add_parser(
        "explain", parents=[common], help="print anchor, formula and tier"
    )
    explain_cmd.add_argument("identity")
    return parser


def _configure_logging(verbose: int) -> None:
    level = logging.WARNING
    if verbose == 1:
        level = logging.INFO
    elif verbose > 1:
        level = logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _print_run(report: RunReport, trace: bool) -> None:
    for item in report.identities:
        print(verdict_line(item))
        if trace:
            for line in trace_lines(item):
                print(line)
    print(
        f"{report.status.upper()}: {len(report.identities) - len(report.failed)}"
        f"/{len(report.identities)} identities (seed {report.settings['seed']})"
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser_args().parse_args(argv)
    _configure_logging(args.verbose)
    try:
        if args.command == "explain":
            print(explain(args.identity, args.dim, args.normal))
            return 0
        if args.command == "verify":
            text = builtin_script(args.suite, args.dim, args.normal, args.jet_order)
        else:
            with open(args.file, encoding="utf-8") as stream:
                text = stream.read()
        settings = CheckSettings.from_env(
            mode=args.mode, seed=args.seed, trials=args.trials, trace=args.trace
        )
        options = ExecuteOptions(settings, frozenset(args.inject_fault))
        ast = parse_script(text)
        if args.command == "run":
            ast = override_scenes(ast, args.dim, args.normal, args.jet_order)
        report = execute_script(ast, options)
        _print_run(report, args.trace)
        if args.report:
            write_report(report, args.format, args.report)
        elif args.format == "md":
            emit_report(report, "md", sys.stdout)
        return 0 if report.status == "pass" else 1
    except ScriptError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (BrstError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
