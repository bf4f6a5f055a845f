"""BRST rule systems: extraction, nilpotency, horizontality, shifting and dressing.

Scenes are built from a matrix connection and ghost. Component rules are read off
the matrix rules entry by entry, so a rule table either closes over the roster or
the scene cannot be built.
"""
from __future__ import annotations

import dataclasses
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dataclass_field
from fractions import Fraction
from typing import (
    Any,
    Callable,
    Collection,
    Dict,
    FrozenSet,
    List,
    Mapping,
    NamedTuple,
    Optional,
    Sequence,
    Tuple,
    Union,
)

try:
    from .formulas import (
        Formula,
        Inverse,
        PointRealizer,
        Realizer,
        SymbolicRealizer,
        chain,
        commutator,
        leaf,
        lie,
    )
    from .graded_core import (
        Bidegree,
        BrstError,
        Derivation,
        Expr,
        Generator,
        InversePair,
        JetCalculus,
        Kind,
        bidegree_split,
        dx,
        expr_sum,
        field,
        ghost,
        right_components,
        substitute_with,
        xi,
    )
    from .jet_oracle import FieldSpec
    from .matrix_forms import LieTemplate, MatrixExpr, graded_commutator, pretty_block
    from .reports import FAIL, PASS, IdentityReport
except ImportError:
    from formulas import (
        Formula,
        Inverse,
        PointRealizer,
        Realizer,
        SymbolicRealizer,
        chain,
        commutator,
        leaf,
        lie,
    )
    from graded_core import (
        Bidegree,
        BrstError,
        Derivation,
        Expr,
        Generator,
        InversePair,
        JetCalculus,
        Kind,
        bidegree_split,
        dx,
        expr_sum,
        field,
        ghost,
        right_components,
        substitute_with,
        xi,
    )
    from jet_oracle import FieldSpec
    from matrix_forms import LieTemplate, MatrixExpr, graded_commutator, pretty_block
    from reports import FAIL, PASS, IdentityReport

logger = logging.getLogger(__name__)

MODES = ("symbolic", "randomized", "both")


class RuleClosureError(BrstError):
    pass


class MissingFieldError(BrstError):
    pass


# Identity checking

Value = Union[Formula, MatrixExpr, Expr, int, Sequence[Any]]
Side = Union[Value, Callable[[Realizer], Value]]


class Check(NamedTuple):
    """One identity lhs == rhs; `faulty` replaces rhs under fault injection."""

    identity_id: str
    anchor: str
    formula: str
    lhs: Side
    rhs: Side = 0
    needs_oracle: bool = False
    note: str = ""
    faulty: Optional[Side] = None


def _uses_inverse(side: Side) -> bool:
    if isinstance(side, Formula):
        return side.has_inverse()
    if isinstance(side, (list, tuple)):
        return any(_uses_inverse(x) for x in side)
    return False


def make_check(
    identity_id: str,
    anchor: str,
    formula: str,
    lhs: Side,
    rhs: Side = 0,
    *,
    needs_oracle: bool = False,
    note: str = "",
    faulty: Optional[Side] = None,
) -> Check:
    needs_oracle = needs_oracle or _uses_inverse(lhs) or _uses_inverse(rhs)
    if faulty is None and not (isinstance(rhs, int) and rhs == 0):
        faulty = _negated(rhs)
    return Check(identity_id, anchor, formula, lhs, rhs, needs_oracle, note, faulty)


def _negated(side: Side) -> Side:
    return lambda r: _scale(_realize(r, side), -1)


def _realize(realizer: Realizer, side: Side) -> Any:
    if callable(side) and not isinstance(side, Formula):
        side = side(realizer)
    if isinstance(side, Formula):
        return realizer.realize(side)
    if isinstance(side, MatrixExpr):
        return realizer.leaf(side)
    if isinstance(side, Expr):
        return realizer.leaf(MatrixExpr([[side]]))[0, 0]
    if isinstance(side, (int, Fraction)):
        return Expr.const(side)
    return [_realize(realizer, x) for x in side]


def _scale(value: Any, factor: int) -> Any:
    if isinstance(value, (MatrixExpr, Expr)):
        return value.scale(factor)
    return [_scale(x, factor) for x in value]


def _flatten(value: Any) -> List[Expr]:
    if isinstance(value, MatrixExpr):
        return [x for row in value.entries for x in row]
    if isinstance(value, Expr):
        return [value]
    return [x for part in value for x in _flatten(part)]


def _render(value: Any) -> str:
    if isinstance(value, MatrixExpr):
        return pretty_block(value)
    if isinstance(value, Expr):
        return str(value)
    return "\n".join(_render(x) for x in value)


def residual_of(lhs: Any, rhs: Any) -> List[Expr]:
    left = _flatten(lhs)
    right = _flatten(rhs)
    if len(right) == 1 and not right[0] and len(left) != 1:
        return left
    if len(left) != len(right):
        raise BrstError(f"sides have {len(left)} and {len(right)} entries")
    return [a - b for a, b in zip(left, right)]


def _describe_residual(residual: Sequence[Expr], limit: int = 600) -> str:
    pieces = [f"[{k}] {x}" for k, x in enumerate(residual) if x]
    text = "\n".join(pieces)
    return text if len(text) <= limit else text[:limit] + " ..."


class CheckSettings(NamedTuple):
    mode: str = "symbolic"
    seed: str = "20240101"
    trials: int = 5
    workers: int = 1
    trace: bool = False

    @classmethod
    def from_env(cls, **overrides: Any) -> "CheckSettings":
        values: Dict[str, Any] = {
            "mode": "symbolic",
            "seed": os.getenv("BRST_SEED", "20240101"),
            "trials": int(os.getenv("BRST_TRIALS", "5")),
            "workers": int(os.getenv("BRST_WORKERS", "1")),
            "trace": False,
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        values["seed"] = str(values["seed"])
        if values["mode"] not in MODES:
            raise BrstError(f"unknown mode {values['mode']!r}")
        if values["trials"] < 1:
            raise BrstError("at least one randomized trial is required")
        return cls(**values)


OracleFactory = Callable[[str], Any]


def _point_text(point: Sequence[Fraction]) -> str:
    return "(" + ", ".join(str(p) for p in point) + ")"


def _mode_label(symbolic: bool, randomized: bool) -> str:
    if symbolic and randomized:
        return "both"
    return "symbolic" if symbolic else "randomized"


class IdentityChecker:
    """Runs checks at tier 1 (normal form) or tier 2 (exact point evaluation)."""

    def __init__(
        self,
        oracle: OracleFactory,
        settings: Optional[CheckSettings] = None,
        faults: Collection[str] = (),
    ):
        self.oracle = oracle
        self.settings = settings or CheckSettings.from_env()
        self.faults = frozenset(faults)

    def _sides(self, item: Check, realizer: Realizer, fault: bool) -> Tuple[Any, Any]:
        lhs = _realize(realizer, item.lhs)
        rhs_side = item.faulty if fault and item.faulty is not None else item.rhs
        return lhs, _realize(realizer, rhs_side)

    def check(self, item: Check) -> IdentityReport:
        start = time.perf_counter()
        fault = item.identity_id in self.faults
        mode = self.settings.mode
        symbolic = not item.needs_oracle and mode in ("symbolic", "both")
        randomized = item.needs_oracle or mode in ("randomized", "both")
        report = IdentityReport(
            identity_id=item.identity_id,
            anchor=item.anchor,
            mode=_mode_label(symbolic, randomized),
            status=PASS,
            tier=1 if symbolic else 2,
            note=item.note,
        )
        if symbolic:
            lhs, rhs = self._sides(item, SymbolicRealizer(), fault)
            residual = residual_of(lhs, rhs)
            count = sum(len(x) for x in residual)
            if count:
                report.status = FAIL
                report.residual_term_count = count
                report.residual = _describe_residual(residual)
        if randomized:
            for t in range(self.settings.trials):
                label = f"{self.settings.seed}:{item.identity_id}:{t}"
                context = self.oracle(label)
                realizer = PointRealizer(context.jet, context)
                lhs, rhs = self._sides(item, realizer, fault)
                residual = residual_of(lhs, rhs)
                report.seeds.append(label)
                report.trials += 1
                logger.debug("%s trial %d at %s", item.identity_id, t, context.point)
                if self.settings.trace:
                    report.trace.append(
                        {
                            "seed": label,
                            "point": _point_text(context.point),
                            "lhs": _render(lhs),
                            "rhs": _render(rhs),
                        }
                    )
                count = sum(len(x) for x in residual)
                if count and report.status == PASS:
                    report.status = FAIL
                    report.residual_term_count = count
                    report.residual = f"trial {t}: " + _describe_residual(residual)
        report.elapsed_ms = round((time.perf_counter() - start) * 1000, 3)
        if report.passed:
            logger.info("%s: pass (tier %d)", item.identity_id, report.tier)
        else:
            logger.warning(
                "%s: FAIL with %d residual terms",
                item.identity_id,
                report.residual_term_count,
            )
        return report

    def run(self, checks: Sequence[Check]) -> List[IdentityReport]:
        if self.settings.workers > 1:
            with ThreadPoolExecutor(max_workers=self.settings.workers) as pool:
                return list(pool.map(self.check, checks))
        return [self.check(item) for item in checks]


# Scenes


@dataclass(frozen=True)
class SceneSpec:
    """Everything define_brst_rules needs to build a scene."""

    name: str
    dim: int
    varpi: MatrixExpr
    ghost: MatrixExpr
    template: Optional[LieTemplate] = None
    matter: Optional[MatrixExpr] = None
    inverses: Tuple[InversePair, ...] = ()
    postulated: Tuple[Tuple[MatrixExpr, MatrixExpr], ...] = ()
    overrides: Mapping[Generator, Expr] = dataclass_field(default_factory=dict)
    xi_offset: Optional[int] = None
    jet_order: Optional[int] = None
    metadata: Mapping[str, Any] = dataclass_field(default_factory=dict)


@dataclass(frozen=True)
class BrstScene:
    spec: SceneSpec
    calc: JetCalculus
    roster: FrozenSet[Generator]
    varpi: Formula
    omega: Formula
    ghost: Formula
    matter: Optional[Formula]
    s_rules: Mapping[Generator, Expr]
    s: Derivation
    sigma_rules: Optional[Mapping[Generator, Expr]] = None
    sigma: Optional[Derivation] = None
    shifted_ghost: Optional[Formula] = None

    @property
    def name(self) -> str:
        return self.spec.name

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def size(self) -> int:
        return self.spec.varpi.rows

    @property
    def d(self) -> Derivation:
        return self.calc.d

    @property
    def i_xi(self) -> Derivation:
        return self.calc.i_xi

    @property
    def shifted(self) -> bool:
        return self.sigma is not None

    def operator(self, which: str) -> Derivation:
        if which == "s":
            return self.s
        if which == "sigma":
            if self.sigma is None:
                raise MissingFieldError(f"scene {self.name} has not been shifted")
            return self.sigma
        raise BrstError(f"unknown operator {which!r}")

    def lie(self, f: Formula) -> Formula:
        return lie(f, self.d, self.i_xi)

    def covariant(self, f: Formula) -> Formula:
        """D f = d f + [varpi, f]."""
        return f.derive(self.d) + commutator(self.varpi, f)

    def xi_matrix(self) -> MatrixExpr:
        """v_xi with entries d_nu xi^rho, placed at the scene's xi offset."""
        offset = self.spec.xi_offset
        if offset is None:
            raise BrstError(f"scene {self.name} has no tensorial index block")
        m = self.dim

        def entry(r: int, c: int) -> Expr:
            rho, nu = r - offset, c - offset
            if 0 <= rho < m and 0 <= nu < m:
                return Expr.gen(xi(rho).prolong(nu))
            return Expr.zero()

        return MatrixExpr.from_function(self.size, self.size, entry)

    def xi_ghost(self) -> Formula:
        return leaf(self.xi_matrix(), "v_xi")

    def oracle(self, label: str, **extra: Any) -> FieldSpec:
        return FieldSpec(
            self.dim,
            label,
            inverses=self.spec.inverses,
            jet_order=self.calc.jet_order,
            names={g.name for g in self.roster},
            **extra,
        )

    def metadata(self) -> Dict[str, Any]:
        data = {
            "scene": self.name,
            "dim": self.dim,
            "size": self.size,
            "jet_order": self.calc.jet_order,
            "template": self.spec.template.tag if self.spec.template else "gl",
        }
        data.update(self.spec.metadata)
        return data


def _single_term(expr: Expr, where: str, name: str) -> Tuple[Fraction, Generator]:
    terms = list(expr.items())
    if len(terms) != 1 or len(terms[0][0]) != 1:
        raise RuleClosureError(
            f"rule table not closing: cannot read a {name}-rule from {where}"
        )
    mono, coeff = terms[0]
    return coeff, mono[0]


def _record(rules: Dict[Generator, Expr], g: Generator, value: Expr, name: str) -> None:
    known = rules.get(g)
    if known is None:
        rules[g] = value
    elif known != value:
        raise RuleClosureError(
            f"rule table not closing: conflicting {name}-rules for {g}"
        )


def extract_rules(
    name: str, source: MatrixExpr, target: MatrixExpr, rules: Dict[Generator, Expr]
) -> None:
    """Read the odd derivation `name` off target = name(source), entry by entry.

    A 1-form entry dx^mu c X gives name(X) = -T_mu / c, a 0-form entry c Y gives
    name(Y) = T / c.
    """
    for i in range(source.rows):
        for j in range(source.cols):
            entry, image = source[i, j], target[i, j]
            where = f"entry ({i},{j})"
            if entry.is_constant:
                if image:
                    raise RuleClosureError(
                        f"rule table not closing: {where} is constant but its "
                        f"{name}-image is {image}"
                    )
                continue
            form = entry.bidegree.form
            if form == 0:
                coeff, g = _single_term(entry, where, name)
                _record(rules, g, image / coeff, name)
                continue
            if form != 1:
                raise RuleClosureError(
                    f"rule table not closing: {where} has form degree {form}"
                )
            images = right_components(image, 1) if image else {}
            for key, piece in right_components(entry, 1).items():
                coeff, g = _single_term(piece, where, name)
                _record(rules, g, -images.get(key, Expr.zero()) / coeff, name)


def _base_generators(matrices: Sequence[Optional[MatrixExpr]]) -> FrozenSet[Generator]:
    found = set()
    for matrix in matrices:
        if matrix is not None:
            found |= {g.base for g in matrix.generators() if g.kind != Kind.DX}
    return frozenset(found)


def check_closure(
    name: str,
    rules: Mapping[Generator, Expr],
    roster: Collection[Generator],
    inverse_names: Collection[str],
) -> None:
    for g in sorted(roster):
        if g.name not in inverse_names and g not in rules:
            raise RuleClosureError(f"rule table not closing: no {name}-rule for {g}")
    for g, image in sorted(rules.items()):
        for h in sorted(image.generators()):
            if h.kind == Kind.DX or h.name in inverse_names or h.base in roster:
                continue
            raise RuleClosureError(
                f"rule table not closing: {name}-rule for {g} mentions {h} "
                "outside the roster"
            )


def define_brst_rules(spec: SceneSpec) -> BrstScene:
    """Component s-rules from s varpi = -dv - [varpi, v], s v = -v v, s psi = -v psi."""
    calc = JetCalculus(spec.dim, spec.jet_order, {p.inverse: p for p in spec.inverses})
    varpi, v = spec.varpi, spec.ghost
    rules: Dict[Generator, Expr] = {}
    extract_rules("s", varpi, -v.apply(calc.d) - graded_commutator(varpi, v), rules)
    extract_rules("s", v, -(v @ v), rules)
    if spec.matter is not None:
        extract_rules("s", spec.matter, -(v @ spec.matter), rules)
    for source, image in spec.postulated:
        extract_rules("s", source, image, rules)
    rules.update(spec.overrides)
    roster = _base_generators(
        [varpi, v, spec.matter] + [source for source, _ in spec.postulated]
    )
    inverse_names = {p.inverse for p in spec.inverses}
    roster = frozenset(g for g in roster if g.name not in inverse_names)
    check_closure("s", rules, roster, inverse_names)
    logger.info(
        "scene %s: %d s-rules over %d generators", spec.name, len(rules), len(roster)
    )
    omega = varpi.apply(calc.d) + varpi @ varpi
    return BrstScene(
        spec=spec,
        calc=calc,
        roster=roster,
        varpi=leaf(varpi, "varpi"),
        omega=leaf(omega, "Omega"),
        ghost=leaf(v, "v"),
        matter=leaf(spec.matter, "psi") if spec.matter is not None else None,
        s_rules=rules,
        s=calc.rule_derivation("s", (0, 1), True, rules),
    )


def shift_algebra(
    scene: BrstScene,
    postulated: Sequence[Tuple[MatrixExpr, MatrixExpr]] = (),
) -> BrstScene:
    """sigma-rules from the shifted horizontality condition with v' = v + i_xi varpi."""
    calc = scene.calc
    d, i = calc.d, calc.i_xi
    varpi = scene.spec.varpi
    v = scene.spec.ghost
    omega = SymbolicRealizer().realize(scene.omega)
    vprime = v + varpi.apply(i)
    rules: Dict[Generator, Expr] = {}
    extract_rules(
        "sigma",
        varpi,
        -vprime.apply(d) - graded_commutator(varpi, vprime) + omega.apply(i),
        rules,
    )
    half = [part / 2 for part in calc.xi_bracket()]
    for rho in range(calc.dim):
        rules[xi(rho)] = half[rho]
    partial = calc.rule_derivation("sigma_varpi", (0, 1), True, dict(rules))
    ghost_target = (
        -(vprime @ vprime)
        + omega.apply(i).apply(i).scale(Fraction(1, 2))
        - varpi.apply(i).apply(partial)
    )
    extract_rules("sigma", v, ghost_target, rules)
    if scene.spec.matter is not None:
        psi = scene.spec.matter
        extract_rules(
            "sigma", psi, -(vprime @ psi) + (psi.apply(d) + varpi @ psi).apply(i), rules
        )
    for source, image in postulated:
        extract_rules("sigma", source, image, rules)
    roster = scene.roster | {xi(rho) for rho in range(calc.dim)}
    check_closure("sigma", rules, roster, set(calc.inverses))
    logger.info("scene %s shifted: %d sigma-rules", scene.name, len(rules))
    return dataclasses.replace(
        scene,
        roster=roster,
        sigma_rules=rules,
        sigma=calc.rule_derivation("sigma", (0, 1), True, rules),
        shifted_ghost=leaf(vprime, "v'"),
    )


class DressingField(NamedTuple):
    name: str
    field: Formula
    inverse: Optional[Formula]


@dataclass(frozen=True)
class DressedScene:
    scene: BrstScene
    dressing: DressingField
    varpi: Formula
    omega: Formula
    matter: Optional[Formula]
    ghost: Formula
    ghost_prime: Optional[Formula] = None
    shifted_of_hat: Optional[Formula] = None


def dress_algebra(scene: BrstScene, dressing: DressingField) -> DressedScene:
    """Composite fields u^-1 varpi u + u^-1 du, u^-1 Omega u, u^-1 psi and ghosts."""
    u, uinv = dressing.field, dressing.inverse
    if u.rows != scene.size or u.cols != scene.size:
        raise MissingFieldError(
            f"dressing field {dressing.name} must be {scene.size}x{scene.size}"
        )
    if uinv is None:
        raise MissingFieldError(f"dressing field {dressing.name} has no inverse")
    for name, rules in (("s", scene.s_rules), ("sigma", scene.sigma_rules)):
        if rules is None:
            continue
        missing = sorted(
            g
            for g in u.generators()
            if g.base not in rules and g.name not in scene.calc.inverses
        )
        if missing:
            raise MissingFieldError(
                f"no {name}-rule for dressing field generator {missing[0]}"
            )
    d = scene.d
    varpi_hat = chain(uinv, scene.varpi, u) + uinv @ u.derive(d)
    ghost_hat = chain(uinv, scene.ghost, u) + uinv @ u.derive(scene.s)
    ghost_prime = shifted_of_hat = None
    if scene.shifted:
        ghost_prime = chain(uinv, scene.shifted_ghost, u) + uinv @ u.derive(scene.sigma)
        shifted_of_hat = ghost_hat + varpi_hat.derive(scene.i_xi)
    return DressedScene(
        scene=scene,
        dressing=dressing,
        varpi=varpi_hat,
        omega=chain(uinv, scene.omega, u),
        matter=uinv @ scene.matter if scene.matter is not None else None,
        ghost=ghost_hat,
        ghost_prime=ghost_prime,
        shifted_of_hat=shifted_of_hat,
    )


# Checks shared by every scene

ANCHORS = {
    "nilpotency.s": "easily verified that $s^2=0$",
    "nilpotency.sigma": "requiring the nilpotency",
    "russian": "Russian formula",
    "matter": "following horizontality condition",
    "shifted_russian": "sorting out the terms",
    "shifted_matter": "following horizontality condition",
    "dressed": "two horizontality conditions",
    "dressed_shifted": "two horizontality conditions",
    "structure": "usual Cartan structure equation",
    "bianchi": "by the Bianchi identity",
    "presentation": "This presentation shows that",
    "sigma_collapse": "shifted BRST algebra with generators",
    "sigma_curvature": "shifted BRST algebra with generators",
    "dressed.rules": "modified by the dressing",
    "commutation": "if and only if the condition",
    "v_hat_prime": "composite shifted ghost defined",
    "footnote_ghost": "pure gauge ghost",
}


def nilpotency_check(scene: BrstScene, operator: str) -> Check:
    op = scene.operator(operator)
    rules = scene.s_rules if operator == "s" else scene.sigma_rules
    order = sorted(rules)
    images = [Expr.gen(g) for g in order]
    once = MatrixExpr.column([op(x) for x in images])
    twice = once.apply(op)
    return make_check(
        f"{scene.name}.nilpotency.{operator}",
        ANCHORS[f"nilpotency.{operator}"],
        f"{operator}^2 = 0 on every generator",
        twice,
        0,
        faulty=once,
    )


def check_nilpotency(
    scene: BrstScene, operator: str = "s", checker: Optional[IdentityChecker] = None
) -> IdentityReport:
    return (checker or scene_checker(scene)).check(nilpotency_check(scene, operator))


def _split_matrix(matrix: MatrixExpr) -> Dict[Bidegree, MatrixExpr]:
    parts: Dict[Bidegree, List[List[Expr]]] = {}
    for i, row in enumerate(matrix.entries):
        for j, x in enumerate(row):
            for degree, piece in bidegree_split(x).items():
                grid = parts.setdefault(
                    degree, [[Expr.zero()] * matrix.cols for _ in range(matrix.rows)]
                )
                grid[i][j] = piece
    return {degree: MatrixExpr(grid) for degree, grid in sorted(parts.items())}


def _component(
    parts: Dict[Bidegree, MatrixExpr], degree: Bidegree, like: MatrixExpr
) -> MatrixExpr:
    return parts.get(degree, MatrixExpr.zeros(like.rows, like.cols))


def _expansion_checks(
    scene: BrstScene,
    which: str,
    pieces: Tuple[MatrixExpr, MatrixExpr, MatrixExpr],
    target: MatrixExpr,
    degrees: Sequence[Bidegree],
) -> Dict[Bidegree, Check]:
    """Checks d-part + operator part + algebraic part == target per bidegree."""
    d_part, op_part, algebraic = pieces
    total = _split_matrix(d_part + op_part + algebraic)
    by_op = _split_matrix(op_part)
    by_algebra = _split_matrix(algebraic)
    wanted = _split_matrix(target)
    checks = {}
    for degree in degrees:
        lhs = _component(total, degree, target)
        moved = _component(by_op, degree, target)
        flipped = moved if not moved.is_zero else _component(by_algebra, degree, target)
        rhs = _component(wanted, degree, target)
        checks[degree] = make_check(
            f"{scene.name}.{which}.{degree.form}{degree.ghost}",
            ANCHORS[which],
            f"bidegree {degree} component of the {which.replace('_', ' ')} condition",
            lhs,
            rhs,
            faulty=rhs + flipped.scale(2),
        )
    return checks


def horizontality_checks(
    scene: BrstScene, which: str, dressed: Optional[DressedScene] = None
) -> Dict[Bidegree, Check]:
    calc = scene.calc
    realize = SymbolicRealizer().realize
    if which in ("dressed", "dressed_shifted"):
        return _dressed_horizontality(scene, which, dressed)
    shifted = which.startswith("shifted")
    op = scene.operator("sigma" if shifted else "s")
    varpi = scene.spec.varpi
    ghost = realize(scene.shifted_ghost) if shifted else scene.spec.ghost
    omega = realize(scene.omega)
    if which in ("russian", "shifted_russian"):
        connection = varpi + ghost
        target = omega
        if shifted:
            once = omega.apply(calc.i_xi)
            target = omega + once + once.apply(calc.i_xi).scale(Fraction(1, 2))
        pieces = (
            connection.apply(calc.d),
            connection.apply(op),
            connection @ connection,
        )
        degrees = [Bidegree(2, 0), Bidegree(1, 1), Bidegree(0, 2)]
    elif which in ("matter", "shifted_matter"):
        psi = scene.spec.matter
        if psi is None:
            raise MissingFieldError(f"scene {scene.name} has no matter field")
        covariant = psi.apply(calc.d) + varpi @ psi
        target = covariant + covariant.apply(calc.i_xi) if shifted else covariant
        pieces = (psi.apply(calc.d), psi.apply(op), (varpi + ghost) @ psi)
        degrees = [Bidegree(1, 0), Bidegree(0, 1)]
    else:
        raise BrstError(f"unknown horizontality condition {which!r}")
    return _expansion_checks(scene, which, pieces, target, degrees)


def _dressed_horizontality(
    scene: BrstScene, which: str, dressed: Optional[DressedScene]
) -> Dict[Bidegree, Check]:
    if dressed is None:
        raise MissingFieldError(f"{which} horizontality needs a dressed scene")
    varpi, omega = dressed.varpi, dressed.omega
    anchor = ANCHORS[which]
    prefix = f"{scene.name}.{which}"
    checks = {}
    if which == "dressed":
        ghost, op = dressed.ghost, scene.s
        checks[Bidegree(2, 0)] = make_check(
            f"{prefix}.20", anchor, "d varpi^ + varpi^ varpi^ = Omega^",
            varpi.derive(scene.d) + varpi @ varpi, omega,
        )
        extra_11 = extra_02 = None
    else:
        if dressed.ghost_prime is None:
            raise MissingFieldError(f"{which} horizontality needs a shifted scene")
        ghost, op = dressed.ghost_prime, scene.operator("sigma")
        extra_11 = omega.derive(scene.i_xi)
        extra_02 = extra_11.derive(scene.i_xi).scale(Fraction(1, 2))
    rhs_11 = -ghost.derive(scene.d) - commutator(varpi, ghost)
    rhs_02 = -(ghost @ ghost)
    if extra_11 is not None:
        rhs_11 = rhs_11 + extra_11
        rhs_02 = rhs_02 + extra_02
    checks[Bidegree(1, 1)] = make_check(
        f"{prefix}.11", anchor, "op varpi^ = -D^ ghost^ (+ i_xi Omega^)",
        varpi.derive(op), rhs_11,
    )
    checks[Bidegree(0, 2)] = make_check(
        f"{prefix}.02", anchor, "op ghost^ = -ghost^ ghost^ (+ 1/2 i_xi i_xi Omega^)",
        ghost.derive(op), rhs_02,
    )
    return checks


def expand_horizontality(
    scene: BrstScene,
    which: str,
    dressed: Optional[DressedScene] = None,
    checker: Optional[IdentityChecker] = None,
) -> Dict[Bidegree, IdentityReport]:
    checker = checker or scene_checker(scene)
    return {
        degree: checker.check(item)
        for degree, item in horizontality_checks(scene, which, dressed).items()
    }


def structure_checks(scene: BrstScene) -> List[Check]:
    varpi, omega = scene.varpi, scene.omega
    half_bracket = commutator(varpi, varpi).scale(Fraction(1, 2))
    return [
        make_check(
            f"{scene.name}.structure",
            ANCHORS["structure"],
            "Omega = d varpi + 1/2 [varpi, varpi]",
            omega,
            varpi.derive(scene.d) + half_bracket,
        ),
        make_check(
            f"{scene.name}.bianchi",
            ANCHORS["bianchi"],
            "d Omega + [varpi, Omega] = 0",
            scene.covariant(omega),
            0,
            faulty=commutator(varpi, omega).scale(2),
        ),
    ]


def presentation_checks(scene: BrstScene) -> List[Check]:
    """sigma agrees with s + L_xi on connection, curvature, ghost and matter."""
    sigma = scene.operator("sigma")
    named = [("A", scene.varpi), ("F", scene.omega), ("v", scene.ghost)]
    if scene.matter is not None:
        named.append(("psi", scene.matter))
    checks = []
    for label, f in named:
        s_part, lie_part = f.derive(scene.s), scene.lie(f)
        checks.append(
            make_check(
                f"{scene.name}.presentation.{label}",
                ANCHORS["presentation"],
                f"sigma {label} = s {label} + L_xi {label}",
                f.derive(sigma),
                s_part + lie_part,
                faulty=s_part - lie_part,
            )
        )
    return checks


def sigma_collapse_check(scene: BrstScene) -> Check:
    """Setting xi to zero turns every sigma-rule into the s-rule."""
    order = sorted(scene.s_rules)

    def kill_xi(g: Generator) -> Optional[int]:
        return 0 if g.kind == Kind.DIFFEO else None

    collapsed = MatrixExpr.column(
        [substitute_with(scene.sigma_rules[g], kill_xi) for g in order]
    )
    expected = MatrixExpr.column([scene.s_rules[g] for g in order])
    return make_check(
        f"{scene.name}.sigma_collapse",
        ANCHORS["sigma_collapse"],
        "sigma|_{xi=0} = s",
        collapsed,
        expected,
    )


def sigma_curvature_check(scene: BrstScene) -> Check:
    """sigma Omega = [Omega, v'] - D(i_xi Omega)."""
    omega, vprime = scene.omega, scene.shifted_ghost
    return make_check(
        f"{scene.name}.sigma_curvature",
        ANCHORS["sigma_curvature"],
        "sigma Omega = [Omega, v'] - D(i_xi Omega)",
        omega.derive(scene.operator("sigma")),
        commutator(omega, vprime) - scene.covariant(omega.derive(scene.i_xi)),
    )


def dressed_rule_checks(dressed: DressedScene) -> List[Check]:
    scene = dressed.scene
    prefix = f"{scene.name}.dressed"
    anchor = ANCHORS["dressed.rules"]
    varpi, omega, ghost = dressed.varpi, dressed.omega, dressed.ghost
    checks = [
        make_check(
            f"{prefix}.s_varpi", anchor, "s varpi^ = -d v^ - [varpi^, v^]",
            varpi.derive(scene.s), -ghost.derive(scene.d) - commutator(varpi, ghost),
        ),
        make_check(
            f"{prefix}.s_omega", anchor, "s Omega^ = [Omega^, v^]",
            omega.derive(scene.s), commutator(omega, ghost),
        ),
        make_check(
            f"{prefix}.s_ghost", anchor, "s v^ = -v^ v^",
            ghost.derive(scene.s), -(ghost @ ghost),
        ),
        make_check(
            f"{prefix}.structure",
            ANCHORS["structure"],
            "Omega^ = d varpi^ + varpi^ varpi^",
            omega, varpi.derive(scene.d) + varpi @ varpi,
        ),
    ]
    if dressed.matter is not None:
        checks.append(
            make_check(
                f"{prefix}.s_matter", anchor, "s psi^ = -v^ psi^",
                dressed.matter.derive(scene.s), -(ghost @ dressed.matter),
            )
        )
    return checks


class CommutationResult(NamedTuple):
    check: Check
    ghost_check: Check
    obstruction: Optional[MatrixExpr]
    classification: str


def commutation_checks(
    dressed: DressedScene, expected: str = "none", prefix: Optional[str] = None
) -> CommutationResult:
    """Obstruction sigma u - (s + L_xi) u and the ghost it implies.

    expected "none" means dressing and shifting commute, "tensorial" means the
    obstruction is u v_xi and v^' = (v^)' + v_xi.
    """
    scene = dressed.scene
    if not scene.shifted:
        raise MissingFieldError(f"scene {scene.name} has not been shifted")
    prefix = prefix or scene.name
    u = dressed.dressing.field
    obstruction = u.derive(scene.sigma) - (u.derive(scene.s) + scene.lie(u))
    if expected == "none":
        target: Any = 0
        ghost_rhs = dressed.shifted_of_hat
    elif expected == "tensorial":
        target = u @ scene.xi_ghost()
        ghost_rhs = dressed.shifted_of_hat + scene.xi_ghost()
    else:
        raise BrstError(f"unknown obstruction type {expected!r}")
    realized = None
    classification = expected
    if not obstruction.has_inverse():
        realized = SymbolicRealizer().realize(obstruction)
        classification = _classify(realized, u, scene)
    check = make_check(
        f"{prefix}.commutation",
        ANCHORS["commutation"],
        "sigma u - (s + L_xi) u = " + ("0" if expected == "none" else "u v_xi"),
        obstruction,
        target,
        note=f"obstruction type: {classification}",
        faulty=None if expected == "tensorial" else u.derive(scene.s),
    )
    ghost_check = make_check(
        f"{prefix}.v_hat_prime",
        ANCHORS["v_hat_prime"],
        "v^' = (v^)'" + (" + v_xi" if expected == "tensorial" else ""),
        dressed.ghost_prime,
        ghost_rhs,
        faulty=dressed.ghost,
    )
    return CommutationResult(check, ghost_check, realized, classification)


def _classify(obstruction: MatrixExpr, u: Formula, scene: BrstScene) -> str:
    if obstruction.is_zero:
        return "none"
    if scene.spec.xi_offset is not None:
        tensorial = SymbolicRealizer().realize(u @ scene.xi_ghost())
        if obstruction == tensorial:
            return "tensorial"
    return "other"


def commutation_test(
    dressed: DressedScene,
    expected: str = "none",
    checker: Optional[IdentityChecker] = None,
) -> Tuple[IdentityReport, Optional[MatrixExpr]]:
    checker = checker or scene_checker(dressed.scene)
    result = commutation_checks(dressed, expected)
    report = checker.check(result.check)
    ghost_report = checker.check(result.ghost_check)
    if not ghost_report.passed and report.passed:
        report = dataclasses.replace(
            report, status=FAIL, note=report.note + "; ghost decomposition fails"
        )
    return report, result.obstruction


def scene_checker(
    scene: BrstScene,
    settings: Optional[CheckSettings] = None,
    faults: Collection[str] = (),
) -> IdentityChecker:
    return IdentityChecker(scene.oracle, settings, faults)


# Yang-Mills scenes


def _one_form(name: str, dim: int, *indices: int) -> Expr:
    return expr_sum(
        Expr.gen(dx(mu)) * Expr.gen(field(name, *indices, mu)) for mu in range(dim)
    )


def yang_mills_spec(
    size: int = 2,
    dim: int = 2,
    matter: bool = True,
    dressing: Optional[str] = "commuting",
    drop_ghost_rule: bool = False,
    jet_order: Optional[int] = None,
) -> SceneSpec:
    """gl(size) gauge field on a dim-dimensional patch.

    With a dressing, u has postulated s u = -v u + u lam and s lam = -lam lam.
    """
    if dressing not in (None, "commuting", "tensorial"):
        raise BrstError(f"unknown dressing kind {dressing!r}")
    if dressing == "tensorial" and size != dim:
        raise BrstError(
            f"tensorial dressing needs matrix size {size} equal to dimension {dim}"
        )
    varpi = MatrixExpr.from_function(size, size, lambda i, j: _one_form("A", dim, i, j))
    v = MatrixExpr.from_function(size, size, lambda i, j: Expr.gen(ghost("v", i, j)))
    psi = None
    if matter:
        psi = MatrixExpr.column([Expr.gen(field("psi", i)) for i in range(size)])
    postulated: Tuple[Tuple[MatrixExpr, MatrixExpr], ...] = ()
    inverses: Tuple[InversePair, ...] = ()
    if dressing:
        u = dressing_matrix(size)
        lam = residual_ghost(size)
        postulated = ((u, -(v @ u) + u @ lam), (lam, -(lam @ lam)))
        inverses = (InversePair("u", "uinv", size),)
    overrides = {}
    if drop_ghost_rule:
        overrides = {
            ghost("v", i, j): Expr.zero() for i in range(size) for j in range(size)
        }
    return SceneSpec(
        name="ym",
        dim=dim,
        varpi=varpi,
        ghost=v,
        matter=psi,
        inverses=inverses,
        postulated=postulated,
        overrides=overrides,
        xi_offset=0 if size == dim else None,
        jet_order=jet_order,
        metadata={"gauge_algebra": f"gl({size})", "dressing": dressing or "none"},
    )


def dressing_matrix(size: int) -> MatrixExpr:
    return MatrixExpr.from_function(size, size, lambda i, j: Expr.gen(field("u", i, j)))


def residual_ghost(size: int) -> MatrixExpr:
    return MatrixExpr.from_function(
        size, size, lambda i, j: Expr.gen(ghost("lam", i, j))
    )


def yang_mills_dressing(scene: BrstScene) -> DressingField:
    size = scene.size
    pair = scene.calc.inverses.get("uinv")
    if pair is None:
        raise MissingFieldError("dressing field u needs inverse generators")
    known = MatrixExpr.from_function(
        size, size, lambda i, j: Expr.gen(pair.inverse_entry(i, j))
    )
    u = leaf(dressing_matrix(size), "u")
    return DressingField("u", u, Inverse(u, known=known))


def yang_mills_sigma_postulates(
    scene: BrstScene, kind: str
) -> Tuple[Tuple[MatrixExpr, MatrixExpr], ...]:
    """sigma u and sigma lam for a commuting or a tensorial dressing."""
    calc = scene.calc
    size = scene.size
    u, lam = dressing_matrix(size), residual_ghost(size)
    v = scene.spec.ghost

    def transport(m: MatrixExpr) -> MatrixExpr:
        return m.map(calc.lie)

    su = -(v @ u) + u @ lam
    if kind == "commuting":
        return (
            (u, su + transport(u)),
            (lam, -(lam @ lam) + transport(lam)),
        )
    vxi = scene.xi_matrix()
    return (
        (u, su + transport(u) + u @ vxi),
        (lam, -(lam @ lam) - (lam @ vxi + vxi @ lam) + transport(lam)),
    )


def build_yang_mills_scene(
    size: int = 2,
    dim: int = 2,
    matter: bool = True,
    dressing: Optional[str] = "commuting",
    drop_ghost_rule: bool = False,
    jet_order: Optional[int] = None,
) -> BrstScene:
    scene = define_brst_rules(
        yang_mills_spec(size, dim, matter, dressing, drop_ghost_rule, jet_order)
    )
    postulated = yang_mills_sigma_postulates(scene, dressing) if dressing else ()
    return shift_algebra(scene, postulated)


def footnote_ghost_check(dressed: DressedScene, expected: str) -> Check:
    """(u^-1 v u + u^-1 sigma u) - u^-1 L_xi u equals v^ (plus v_xi for a tensor)."""
    scene = dressed.scene
    u, uinv = dressed.dressing.field, dressed.dressing.inverse
    alternative = (
        chain(uinv, scene.ghost, u) + uinv @ u.derive(scene.sigma) - uinv @ scene.lie(u)
    )
    rhs = dressed.ghost
    if expected == "tensorial":
        rhs = rhs + scene.xi_ghost()
    return make_check(
        f"{scene.name}.footnote_ghost",
        ANCHORS["footnote_ghost"],
        "(u^-1 v u + u^-1 sigma u) - u^-1 L_xi u = v^",
        alternative,
        rhs,
    )


def yang_mills_checks(
    scene: BrstScene, dressing: Optional[str] = "commuting"
) -> List[Check]:
    checks = [nilpotency_check(scene, "s"), nilpotency_check(scene, "sigma")]
    for which in ("russian", "shifted_russian"):
        checks += horizontality_checks(scene, which).values()
    if scene.matter is not None:
        for which in ("matter", "shifted_matter"):
            checks += horizontality_checks(scene, which).values()
    checks += structure_checks(scene)
    checks += presentation_checks(scene)
    checks += [sigma_collapse_check(scene), sigma_curvature_check(scene)]
    if dressing:
        dressed = dress_algebra(scene, yang_mills_dressing(scene))
        checks += dressed_rule_checks(dressed)
        checks += horizontality_checks(scene, "dressed", dressed).values()
        checks += horizontality_checks(scene, "dressed_shifted", dressed).values()
        expected = "tensorial" if dressing == "tensorial" else "none"
        result = commutation_checks(dressed, expected)
        checks += [
            result.check,
            result.ghost_check,
            footnote_ghost_check(dressed, expected),
        ]
    return checks


def verify_yang_mills_suite(
    scene: BrstScene,
    dressing: Optional[str] = "commuting",
    checker: Optional[IdentityChecker] = None,
) -> List[IdentityReport]:
    return (checker or scene_checker(scene)).run(yang_mills_checks(scene, dressing))
