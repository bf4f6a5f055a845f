"""Conformal Cartan geometry: the Mobius connection dressed in two steps.

The connection lives in so(J) with J = [[0, 0, -1], [0, eta, 0], [-1, 0, 0]]:

    varpi = [[a, alpha, 0], [theta, A, alpha^t], [0, theta^t, -a]]

with ghost v = [[eps, iota, 0], [0, c, iota^t], [0, 0, -eps]]. The first dressing
field u1 is built from q = a e^-1 and neutralizes the special conformal ghost iota;
u0 = diag(1, e, 1) then neutralizes the Lorentz ghost c. Only the Weyl ghost eps
survives, and the final shifted ghost is v0' = v0 + i_xi varpi0 + v_xi.
"""
from __future__ import annotations

import itertools
import logging
from fractions import Fraction
from typing import Callable, Collection, Dict, List, NamedTuple, Optional, Tuple

try:
    from .brst_engine import (
        BrstScene,
        Check,
        CheckSettings,
        DressingField,
        IdentityChecker,
        OracleFactory,
        SceneSpec,
        commutation_checks,
        define_brst_rules,
        dress_algebra,
        dressed_rule_checks,
        make_check,
        nilpotency_check,
        presentation_checks,
        shift_algebra,
        structure_checks,
    )
    from .formulas import (
        Block,
        EtaTranspose,
        Formula,
        Inverse,
        Realizer,
        Zero,
        chain,
        commutator,
        exact_inverse,
        identity,
        leaf,
    )
    from .geometry_gr import (
        Components,
        ComponentSource,
        eta_of,
        lie_torsion_terms,
        spin_generator,
        vielbein_matrix,
    )
    from .graded_core import (
        BrstError,
        Expr,
        Generator,
        InversePair,
        antisymmetric_component,
        dx,
        expr_sum,
        field,
        ghost,
        left_components,
        right_components,
        substitute_with,
        xi,
    )
    from .jet_oracle import (
        RIEMANN_CONVENTION,
        Curvature,
        component_values,
        lie_derivative_components,
        normal_conformal_fields,
        vielbein_curvature,
    )
    from .matrix_forms import EtaMetric, MatrixExpr, build_lie_template, sector_project
    from .reports import IdentityReport
except ImportError:
    from brst_engine import (
        BrstScene,
        Check,
        CheckSettings,
        DressingField,
        IdentityChecker,
        OracleFactory,
        SceneSpec,
        commutation_checks,
        define_brst_rules,
        dress_algebra,
        dressed_rule_checks,
        make_check,
        nilpotency_check,
        presentation_checks,
        shift_algebra,
        structure_checks,
    )
    from formulas import (
        Block,
        EtaTranspose,
        Formula,
        Inverse,
        Realizer,
        Zero,
        chain,
        commutator,
        exact_inverse,
        identity,
        leaf,
    )
    from geometry_gr import (
        Components,
        ComponentSource,
        eta_of,
        lie_torsion_terms,
        spin_generator,
        vielbein_matrix,
    )
    from graded_core import (
        BrstError,
        Expr,
        Generator,
        InversePair,
        antisymmetric_component,
        dx,
        expr_sum,
        field,
        ghost,
        left_components,
        right_components,
        substitute_with,
        xi,
    )
    from jet_oracle import (
        RIEMANN_CONVENTION,
        Curvature,
        component_values,
        lie_derivative_components,
        normal_conformal_fields,
        vielbein_curvature,
    )
    from matrix_forms import EtaMetric, MatrixExpr, build_lie_template, sector_project
    from reports import IdentityReport

logger = logging.getLogger(__name__)

STAGES = ("stage1", "stage2", "single")

CONFORMAL_ANCHORS = {
    "template": "abelian group of inversions",
    "sigma_q": "with a first dressing field",
    "stage1": "commutative diagram",
    "obstruction": "the final ghost has the decomposition",
    "v0_prime": "the final ghost",
    "redundancy": "is of course redundant with entries",
    "single_step": "in a single step",
    "sigma_fields": "the Weyl BRST operator associated with the Weyl ghost",
    "weyl_abelian": "the Weyl group of scale transformations is abelian",
    "lie_frame": "correct infinitesimal transformations under active diffeomorphisms",
    "lie_curvature": "infinitesimal transformations under active diffeomorphisms of "
    "the Cotton and Weyl tensors",
    "normality": "preserved through the successive dressing operations",
    "nonnormal": "imposing the constrains",
    "schouten": "Riemannian parametrization of the normal conformal Cartan connection",
    "compatibility": "the two dressing fields satisfies",
}

COMPATIBILITY_NOTE = "compatibility of u0 and u1 checked to first order in the ghosts"
NORMAL_NOTE = (
    "Theta = 0, f = 0 and the trace condition hold on the sampled fields; "
    "the symbolic rules are those of the generic connection"
)
WEYL_SKIPPED = "skipped: W vanishes identically below dimension four"


def _xi(rho: int) -> Expr:
    return Expr.gen(xi(rho))


def _dxi(rho: int, nu: int) -> Expr:
    return Expr.gen(xi(rho).prolong(nu))


def _weyl(*jet: int) -> Expr:
    g = ghost("eps")
    for mu in jet:
        g = g.prolong(mu)
    return Expr.gen(g)


def conformal_spec(
    m: int = 4,
    normal: bool = False,
    eta: Optional[EtaMetric] = None,
    jet_order: Optional[int] = None,
) -> SceneSpec:
    """Mobius(m) connection and ghost; e is registered with its inverse."""
    eta = eta or EtaMetric.minkowski(m)
    template = build_lie_template("mobius", m, eta)
    n = m + 2
    last = n - 1

    def one_form(name: str, *indices: int) -> Expr:
        return expr_sum(
            Expr.gen(dx(mu)) * Expr.gen(field(name, *indices, mu)) for mu in range(m)
        )

    def lorentz(a: int, b: int, value: Callable[[int, int], Expr]) -> Expr:
        if a == b:
            return Expr.zero()
        if a < b:
            return value(a, b).scale(eta.inverse_entry(a))
        return -value(b, a).scale(eta.inverse_entry(a))

    def spin_form(a: int, b: int) -> Expr:
        return expr_sum(
            Expr.gen(dx(mu)) * Expr.gen(spin_generator(a, b, mu)) for mu in range(m)
        )

    def place(
        i: int,
        j: int,
        scale: Expr,
        upper: Callable[[int], Expr],
        lower: Callable[[int], Expr],
        middle: Callable[[int, int], Expr],
    ) -> Expr:
        inner_i, inner_j = 1 <= i <= m, 1 <= j <= m
        if (i, j) == (0, 0):
            return scale
        if (i, j) == (last, last):
            return -scale
        if i == 0 and inner_j:
            return upper(j - 1)
        if inner_i and j == last:
            return upper(i - 1).scale(eta.inverse_entry(i - 1))
        if inner_i and j == 0:
            return lower(i - 1)
        if i == last and inner_j:
            return lower(j - 1).scale(eta.entry(j - 1))
        if inner_i and inner_j:
            return lorentz(i - 1, j - 1, middle)
        return Expr.zero()

    def connection(i: int, j: int) -> Expr:
        return place(
            i,
            j,
            one_form("a"),
            lambda b: one_form("alpha", b),
            lambda b: one_form("e", b),
            spin_form,
        )

    def conformal_ghost(i: int, j: int) -> Expr:
        return place(
            i,
            j,
            _weyl(),
            lambda b: Expr.gen(ghost("iota", b)),
            lambda b: Expr.zero(),
            lambda a, b: Expr.gen(ghost("c", a, b)),
        )

    return SceneSpec(
        name="conf",
        dim=m,
        varpi=MatrixExpr.from_function(n, n, connection),
        ghost=MatrixExpr.from_function(n, n, conformal_ghost),
        template=template,
        inverses=(InversePair("e", "einv", m),),
        xi_offset=1,
        jet_order=jet_order,
        metadata={
            "gauge_algebra": template.tag,
            "eta": eta.describe(),
            "normal": normal,
            "compatibility": COMPATIBILITY_NOTE,
            "riemann_convention": RIEMANN_CONVENTION,
            "weyl": "checked" if m >= 4 else WEYL_SKIPPED,
            **({"normal_constraints": NORMAL_NOTE} if normal else {}),
        },
    )


def build_conformal_scene(
    m: int = 4,
    normal: bool = False,
    eta: Optional[EtaMetric] = None,
    jet_order: Optional[int] = None,
) -> BrstScene:
    """Conformal scene with sigma-rules.

    `normal` constrains the sampled connection only; NORMAL_NOTE goes into the
    scene metadata so every report says so.
    """
    if m < 3:
        raise BrstError(f"conformal scene needs m >= 3, got {m}")
    scene = shift_algebra(
        define_brst_rules(conformal_spec(m, normal, eta, jet_order))
    )
    logger.info("conformal scene built for m=%d (normal=%s)", m, normal)
    return scene


def is_normal(scene: BrstScene) -> bool:
    return bool(scene.spec.metadata.get("normal"))


def conformal_oracle(scene: BrstScene) -> OracleFactory:
    """Field samples for the checker; normal scenes sample a normal connection."""
    if not is_normal(scene):
        return scene.oracle
    eta = eta_of(scene)
    return lambda label: scene.oracle(
        label, overrides=lambda spec: normal_conformal_fields(spec, eta)
    )


def conformal_checker(
    scene: BrstScene,
    settings: Optional[CheckSettings] = None,
    faults: Collection[str] = (),
) -> IdentityChecker:
    return IdentityChecker(conformal_oracle(scene), settings, faults)


# Dressing fields


class ConformalDressing(NamedTuple):
    q: Formula
    u1: Formula
    u1_inverse: Formula
    u0: Formula
    u0_inverse: Formula


class DressingStage(NamedTuple):
    stage: str
    varpi: Formula
    omega: Formula
    ghost: Formula
    ghost_prime: Formula
    shifted_of_hat: Formula


def conformal_dressing(scene: BrstScene) -> ConformalDressing:
    """u1 = [[1, q, q q^t / 2], [0, 1, q^t], [0, 0, 1]] with q = a e^-1.

    u0 = diag(1, e, 1); both inverses are explicit, e^-1 uses the einv generators.
    """
    m = scene.dim
    pair = scene.calc.inverses["einv"]
    known = MatrixExpr.from_function(
        m, m, lambda i, j: Expr.gen(pair.inverse_entry(i, j))
    )
    e = leaf(vielbein_matrix(m), "e")
    einv = Inverse(e, known=known)
    a = leaf(MatrixExpr.row([Expr.gen(field("a", mu)) for mu in range(m)]), "a")
    q = a @ einv
    qt = EtaTranspose(q, eta_of(scene))
    half = (q @ qt).scale(Fraction(1, 2))
    one = identity(1)

    def unipotent(sign: int) -> Formula:
        return Block(
            [
                [one, q.scale(sign), half],
                [Zero(m, 1), identity(m), qt.scale(sign)],
                [Zero(1, 1), Zero(1, m), one],
            ]
        )

    def diagonal(block: Formula) -> Formula:
        return Block(
            [
                [one, Zero(1, m), Zero(1, 1)],
                [Zero(m, 1), block, Zero(m, 1)],
                [Zero(1, 1), Zero(1, m), one],
            ]
        )

    return ConformalDressing(
        q, unipotent(1), unipotent(-1), diagonal(e), diagonal(einv)
    )


def _stage(name: str, dressed) -> DressingStage:
    return DressingStage(
        name,
        dressed.varpi,
        dressed.omega,
        dressed.ghost,
        dressed.ghost_prime,
        dressed.shifted_of_hat,
    )


def dress_conformal(
    scene: BrstScene,
    stage: str = "single",
    fields: Optional[ConformalDressing] = None,
) -> DressingStage:
    """Composite fields after u1 (stage1), after u1 then u0 (stage2) or after u1 u0."""
    if stage not in STAGES:
        raise BrstError(f"unknown dressing stage {stage!r}, expected one of {STAGES}")
    fields = fields or conformal_dressing(scene)
    if stage == "single":
        u = fields.u1 @ fields.u0
        uinv = fields.u0_inverse @ fields.u1_inverse
        return _stage(stage, dress_algebra(scene, DressingField("u", u, uinv)))
    first = _stage(
        "stage1",
        dress_algebra(scene, DressingField("u1", fields.u1, fields.u1_inverse)),
    )
    if stage == "stage1":
        return first
    u0, u0inv = fields.u0, fields.u0_inverse
    varpi = chain(u0inv, first.varpi, u0) + u0inv @ u0.derive(scene.d)
    ghost_hat = chain(u0inv, first.ghost, u0) + u0inv @ u0.derive(scene.s)
    ghost_prime = chain(u0inv, first.ghost_prime, u0) + u0inv @ u0.derive(
        scene.operator("sigma")
    )
    return DressingStage(
        stage,
        varpi,
        chain(u0inv, first.omega, u0),
        ghost_hat,
        ghost_prime,
        ghost_hat + varpi.derive(scene.i_xi),
    )


# Components of the fully dressed fields


def _form_keys(m: int, degree: int) -> List[Tuple[int, ...]]:
    if degree == 1:
        return [(mu,) for mu in range(m)]
    return [(mu, sigma) for mu in range(m) for sigma in range(mu + 1, m)]


def block_components(
    realized: MatrixExpr,
    m: int,
    cell: Callable[..., Tuple[int, int]],
    rank: int,
    degree: int,
) -> Components:
    """Left dx-components of the entries cell(prefix), keyed prefix + form indices."""
    result: Components = {}
    for prefix in itertools.product(range(m), repeat=rank):
        parts = left_components(realized[cell(*prefix)], degree)
        for key in _form_keys(m, degree):
            result[prefix + key] = parts.get(key, Expr.zero())
    return result


def _ordered(components: Components) -> List[Expr]:
    return [components[key] for key in sorted(components)]


class RiemannianBlocks(NamedTuple):
    """g_{mu nu}, Gamma^rho_{nu mu} and P_{nu mu} read off varpi0."""

    metric: Components
    gamma: Components
    schouten: Components

    def inverse_metric(self, m: int) -> MatrixExpr:
        return exact_inverse(
            MatrixExpr.from_function(m, m, lambda mu, nu: self.metric[(mu, nu)])
        )


def riemannian_blocks(varpi0: MatrixExpr, m: int) -> RiemannianBlocks:
    last = m + 1
    metric = {
        (mu, nu): value
        for (nu, mu), value in block_components(
            varpi0, m, lambda nu: (last, 1 + nu), 1, 1
        ).items()
    }
    gamma = block_components(varpi0, m, lambda rho, nu: (1 + rho, 1 + nu), 2, 1)
    schouten = block_components(varpi0, m, lambda nu: (0, 1 + nu), 1, 1)
    return RiemannianBlocks(metric, gamma, schouten)


def conformal_torsion(omega0: MatrixExpr, m: int) -> Components:
    """T^rho_{mu sigma} from Omega0(1 + rho, 0)."""
    torsion: Components = {}
    for rho in range(m):
        parts = right_components(omega0[1 + rho, 0], 2)
        for mu in range(m):
            for sigma in range(m):
                torsion[(rho, mu, sigma)] = antisymmetric_component(parts, mu, sigma)
    return torsion


def explicit_final_ghost(
    varpi0: Formula, m: int, flip: int = 1
) -> Callable[[Realizer], MatrixExpr]:
    """v0' written through eps, xi and the blocks g, Gamma, P of varpi0."""
    n, last = m + 2, m + 1

    def build(r: Realizer) -> MatrixExpr:
        blocks = riemannian_blocks(r.realize(varpi0), m)
        ginv = blocks.inverse_metric(m)

        def weyl_row(nu: int) -> Expr:
            return expr_sum(
                [_weyl(nu).scale(flip)]
                + [blocks.schouten[(nu, lam)] * _xi(lam) for lam in range(m)]
            )

        def entry(i: int, j: int) -> Expr:
            inner_i, inner_j = 1 <= i <= m, 1 <= j <= m
            if (i, j) == (0, 0):
                return _weyl()
            if (i, j) == (last, last):
                return -_weyl()
            if i == 0 and inner_j:
                return weyl_row(j - 1)
            if inner_i and j == 0:
                return _xi(i - 1)
            if inner_i and inner_j:
                rho, nu = i - 1, j - 1
                terms = [_dxi(rho, nu)]
                terms += [blocks.gamma[(rho, nu, lam)] * _xi(lam) for lam in range(m)]
                if rho == nu:
                    terms.append(_weyl())
                return expr_sum(terms)
            if inner_i and j == last:
                return expr_sum(ginv[i - 1, a] * weyl_row(a) for a in range(m))
            if i == last and inner_j:
                return expr_sum(
                    _xi(lam) * blocks.metric[(lam, j - 1)] for lam in range(m)
                )
            return Expr.zero()

        return MatrixExpr.from_function(n, n, entry)

    return build


# Checks


def _restricted(matrix: MatrixExpr, removed: Collection[str]) -> MatrixExpr:
    """Sets every ghost named in `removed` (and its jets) to zero."""

    def kill(g: Generator) -> Optional[int]:
        return 0 if g.name in removed else None

    return matrix.map(lambda x: substitute_with(x, kill))


def compatibility_check(scene: BrstScene, fields: ConformalDressing) -> Check:
    """The dressing fields under Lorentz and special conformal transformations.

    Lorentz: s u1 = u1 v_L - v_L u1 and s u0 = -v_L u0.
    Special conformal: s u0 = 0 and s u1 = -v_iota u1.
    """
    n = scene.size
    lorentz_only, iota_only = ("eps", "iota"), ("eps", "c")
    v_lorentz = leaf(_restricted(scene.spec.ghost, lorentz_only), "v_L")
    v_iota = leaf(_restricted(scene.spec.ghost, iota_only), "v_iota")
    s_u1, s_u0 = fields.u1.derive(scene.s), fields.u0.derive(scene.s)

    def restrict(formula: Formula, removed: Tuple[str, ...]):
        return lambda r: _restricted(r.realize(formula), removed)

    return make_check(
        "conf.first_order_compat",
        CONFORMAL_ANCHORS["compatibility"],
        "s_L u1 = [u1, v_L], s_iota u0 = 0, s_iota u1 = -v_iota u1, s_L u0 = -v_L u0",
        [
            restrict(s_u1, lorentz_only),
            restrict(s_u0, iota_only),
            restrict(s_u1, iota_only),
            restrict(s_u0, lorentz_only),
        ],
        [
            fields.u1 @ v_lorentz - v_lorentz @ fields.u1,
            Zero(n, n),
            -(v_iota @ fields.u1),
            -(v_lorentz @ fields.u0),
        ],
        needs_oracle=True,
        note=COMPATIBILITY_NOTE,
    )


def _curvature_side(
    pick: Callable[[Curvature], Dict[Tuple[int, ...], object]],
    valence: str,
    eta: EtaMetric,
    connection: bool = False,
    degree: int = 1,
) -> Callable[[Realizer], List[Expr]]:
    def build(r: Realizer) -> List[Expr]:
        spec = r.context
        lie = lie_derivative_components(
            spec, pick(vielbein_curvature(spec, eta)), valence, connection
        )
        return [lie[key] for key in sorted(lie) if degree == 1 or key[-2] < key[-1]]

    return build


def normal_checks(
    scene: BrstScene, single: DressingStage, first: DressingStage
) -> List[Check]:
    """Identities that need the sampled connection to be normal."""
    m = scene.dim
    last = m + 1
    eta = eta_of(scene)
    template = scene.spec.template
    sigma = scene.operator("sigma")
    varpi0, omega0 = single.varpi, single.omega
    delta_varpi = varpi0.derive(sigma) - varpi0.derive(scene.s)
    delta_omega = omega0.derive(sigma) - omega0.derive(scene.s)

    def engine(
        formula: Formula, cell: Callable[..., Tuple[int, int]], rank: int, degree: int
    ) -> Callable[[Realizer], List[Expr]]:
        return lambda r: _ordered(
            block_components(r.realize(formula), m, cell, rank, degree)
        )

    def metric(curvature: Curvature) -> Dict[Tuple[int, int], object]:
        return {
            (nu, mu): curvature.metric[mu][nu] for mu in range(m) for nu in range(m)
        }

    lie_cases = [
        (
            "g",
            "sigma g_{mu nu} = L_xi g_{mu nu}",
            engine(delta_varpi, lambda nu: (last, 1 + nu), 1, 1),
            _curvature_side(metric, "dd", eta),
            "lie_frame",
        ),
        (
            "gamma",
            "sigma Gamma = L_xi Gamma + d d xi, Levi-Civita connection",
            engine(delta_varpi, lambda rho, nu: (1 + rho, 1 + nu), 2, 1),
            _curvature_side(lambda c: c.gamma, "udd", eta, connection=True),
            "lie_frame",
        ),
        (
            "schouten",
            "sigma P_{nu mu} = L_xi P_{nu mu}",
            engine(delta_varpi, lambda nu: (0, 1 + nu), 1, 1),
            _curvature_side(lambda c: c.schouten, "dd", eta),
            "lie_frame",
        ),
        (
            "cotton",
            "sigma C_{nu,mu sigma} = L_xi C_{nu,mu sigma}",
            engine(delta_omega, lambda nu: (0, 1 + nu), 1, 2),
            _curvature_side(lambda c: c.cotton, "ddd", eta, degree=2),
            "lie_curvature",
        ),
        (
            "weyl",
            "sigma W^rho_{nu,mu sigma} = L_xi W^rho_{nu,mu sigma}",
            engine(delta_omega, lambda rho, nu: (1 + rho, 1 + nu), 2, 2),
            _curvature_side(lambda c: c.weyl, "uddd", eta, degree=2),
            "lie_curvature",
        ),
    ]
    if m < 4:
        lie_cases = [case for case in lie_cases if case[0] != "weyl"]
    checks = [
        make_check(
            f"conf.lie_{label}",
            CONFORMAL_ANCHORS[anchor],
            formula,
            lhs,
            rhs,
            needs_oracle=True,
        )
        for label, formula, lhs, rhs, anchor in lie_cases
    ]

    curvatures = (scene.omega, first.omega, omega0)

    def sectors(names: Tuple[str, ...]) -> Callable[[Realizer], List[object]]:
        def build(r: Realizer) -> List[object]:
            projected: List[object] = [
                sector_project(r.realize(omega), template, name)
                for omega in curvatures
                for name in names
            ]
            realized = r.realize(omega0)
            for nu in range(m):
                for sig in range(m):
                    projected.append(
                        expr_sum(
                            antisymmetric_component(
                                right_components(realized[1 + rho, 1 + nu], 2),
                                rho,
                                sig,
                            )
                            for rho in range(m)
                        )
                    )
            return projected

        return build

    checks.append(
        make_check(
            "conf.normality_preserved",
            CONFORMAL_ANCHORS["normality"],
            "torsion and trace sectors of Omega, Omega1, Omega0 vanish; W is traceless",
            sectors(("g-1", "trace")),
            0,
            needs_oracle=True,
            faulty=sectors(("g1", "g1")),
        )
    )

    def frame_values(r: Realizer) -> List[Expr]:
        blocks = riemannian_blocks(r.realize(varpi0), m)
        return _ordered(blocks.metric) + _ordered(blocks.gamma)

    def oracle_frame(r: Realizer) -> List[Expr]:
        curvature = vielbein_curvature(r.context, eta)
        metric_values = [
            Expr.const(r.context.jet_value(curvature.metric[mu][nu], ()))
            for mu in range(m)
            for nu in range(m)
        ]
        return metric_values + [
            Expr.const(v) for v in component_values(r.context, curvature.gamma).values()
        ]

    def schouten_values(r: Realizer) -> List[Expr]:
        return _ordered(riemannian_blocks(r.realize(varpi0), m).schouten)

    def oracle_schouten(r: Realizer) -> List[Expr]:
        curvature = vielbein_curvature(r.context, eta)
        values = component_values(r.context, curvature.schouten)
        return [Expr.const(values[key]) for key in sorted(values)]

    checks += [
        make_check(
            "conf.riemannian_frame",
            CONFORMAL_ANCHORS["schouten"],
            "g and Gamma read off varpi0 are e^T eta e and its Levi-Civita connection",
            frame_values,
            oracle_frame,
            needs_oracle=True,
        ),
        make_check(
            "conf.schouten_crosscheck",
            CONFORMAL_ANCHORS["schouten"],
            "P read off varpi0 equals -(Ric - R g / 2(m-1)) / (m-2)",
            schouten_values,
            oracle_schouten,
            needs_oracle=True,
        ),
    ]
    return checks


def nonnormal_checks(scene: BrstScene, single: DressingStage) -> List[Check]:
    """Torsion and trace entries of a generic conformal connection."""
    m = scene.dim
    sigma = scene.operator("sigma")
    omega0 = single.omega
    delta_omega = omega0.derive(sigma) - omega0.derive(scene.s)
    torsion = ComponentSource(scene, omega0, conformal_torsion)

    def lie_torsion(flip: int) -> Callable[[Realizer], List[Expr]]:
        return lambda r: _ordered(
            lie_torsion_terms(torsion.values(r), torsion.derivatives(r), m, flip)
        )

    def trace_form(r: Realizer) -> List[Expr]:
        parts = right_components(r.realize(omega0)[0, 0], 2)
        return [parts.get(key, Expr.zero()) for key in _form_keys(m, 2)]

    def schouten_skew(sign: int) -> Callable[[Realizer], List[Expr]]:
        def build(r: Realizer) -> List[Expr]:
            p = riemannian_blocks(r.realize(single.varpi), m).schouten
            return [
                p[(sig, mu)] - p[(mu, sig)].scale(sign)
                for mu, sig in _form_keys(m, 2)
            ]

        return build

    return [
        make_check(
            "conf.nonnormal_torsion",
            CONFORMAL_ANCHORS["nonnormal"],
            "sigma T^rho_{mu sigma} = L_xi T^rho_{mu sigma}",
            lambda r: _ordered(
                block_components(
                    r.realize(delta_omega), m, lambda rho: (1 + rho, 0), 1, 2
                )
            ),
            lie_torsion(1),
            needs_oracle=True,
            faulty=lie_torsion(-1),
        ),
        make_check(
            "conf.nonnormal_trace",
            CONFORMAL_ANCHORS["nonnormal"],
            "f_{mu sigma} = P_{sigma mu} - P_{mu sigma}",
            trace_form,
            schouten_skew(1),
            needs_oracle=True,
            faulty=schouten_skew(-1),
        ),
    ]


def conformal_checks(scene: BrstScene) -> List[Check]:
    """Every conformal identity for this scene, normal extras included when set."""
    m, n = scene.dim, scene.size
    last = n - 1
    sigma = scene.operator("sigma")
    template = scene.spec.template
    fields = conformal_dressing(scene)
    first = dress_conformal(scene, "stage1", fields)
    second = dress_conformal(scene, "stage2", fields)
    single = dress_conformal(scene, "single", fields)
    varpi0, omega0 = single.varpi, single.omega
    v0, v0_prime = single.ghost, single.ghost_prime
    v_xi = scene.xi_ghost()

    checks = [
        make_check(
            "conf.template",
            CONFORMAL_ANCHORS["template"],
            "varpi and v lie in so(J)",
            MatrixExpr.column(
                template.conditions(scene.spec.varpi)
                + template.conditions(scene.spec.ghost)
            ),
            0,
        ),
        nilpotency_check(scene, "s"),
        nilpotency_check(scene, "sigma"),
    ]
    checks += structure_checks(scene)
    checks += presentation_checks(scene)

    q = fields.q
    checks.append(
        make_check(
            "conf.sigma_q",
            CONFORMAL_ANCHORS["sigma_q"],
            "sigma q = s q + L_xi q",
            q.derive(sigma),
            q.derive(scene.s) + scene.lie(q),
        )
    )
    stage_one = commutation_checks(
        dress_algebra(scene, DressingField("u1", fields.u1, fields.u1_inverse)),
        "none",
        prefix="conf.stage1",
    )
    checks += [
        stage_one.check._replace(identity_id="conf.stage1.obstruction"),
        stage_one.ghost_check._replace(identity_id="conf.stage1_commute"),
    ]

    u0 = fields.u0
    checks.append(
        make_check(
            "conf.obstruction",
            CONFORMAL_ANCHORS["obstruction"],
            "sigma u0 = s u0 + L_xi u0 + u0 v_xi",
            u0.derive(sigma) - (u0.derive(scene.s) + scene.lie(u0)),
            u0 @ v_xi,
            note="obstruction type: tensorial",
        )
    )
    dressed = dress_algebra(
        scene,
        DressingField(
            "u", fields.u1 @ fields.u0, fields.u0_inverse @ fields.u1_inverse
        ),
    )
    result = commutation_checks(dressed, "tensorial", prefix="conf")
    checks += [result.check, result.ghost_check]
    checks += dressed_rule_checks(dressed)

    checks.append(
        make_check(
            "conf.v0_prime.matrix",
            CONFORMAL_ANCHORS["v0_prime"],
            "v0' = v0 + i_xi varpi0 + v_xi written through eps, xi, g, Gamma and P",
            v0_prime,
            explicit_final_ghost(varpi0, m),
            needs_oracle=True,
            faulty=explicit_final_ghost(varpi0, m, -1),
        )
    )

    def column_entries(r: Realizer) -> MatrixExpr:
        realized = r.realize(v0_prime)
        return MatrixExpr.column([realized[1 + rho, last] for rho in range(m)])

    def raised_row(r: Realizer) -> MatrixExpr:
        realized = r.realize(v0_prime)
        ginv = riemannian_blocks(r.realize(varpi0), m).inverse_metric(m)
        return MatrixExpr.column(
            [
                expr_sum(ginv[rho, a] * realized[0, 1 + a] for a in range(m))
                for rho in range(m)
            ]
        )

    checks += [
        make_check(
            "conf.v0_prime.redundancy",
            CONFORMAL_ANCHORS["redundancy"],
            "v0'(1 + rho, n) = g^{rho a} v0'(0, 1 + a)",
            column_entries,
            raised_row,
            needs_oracle=True,
        ),
        make_check(
            "conf.single_step_equal",
            CONFORMAL_ANCHORS["single_step"],
            "dressing by u1 then u0 equals dressing by u = u1 u0",
            [varpi0, omega0, v0, v0_prime],
            [second.varpi, second.omega, second.ghost, second.ghost_prime],
            faulty=[first.varpi, first.omega, first.ghost, first.ghost_prime],
        ),
    ]

    weyl_part = -v0.derive(scene.d) - commutator(varpi0, v0)
    lie_varpi = scene.lie(varpi0)
    bracket = commutator(v_xi, varpi0)
    dv_xi = v_xi.derive(scene.d)
    lie_omega = scene.lie(omega0)
    omega_bracket = commutator(v_xi, omega0)
    half_ii = omega0.derive(scene.i_xi).derive(scene.i_xi).scale(Fraction(1, 2))
    checks += [
        make_check(
            "conf.sigma_varpi0",
            CONFORMAL_ANCHORS["sigma_fields"],
            "sigma varpi0 = s_W varpi0 + L_xi varpi0 - [v_xi, varpi0] - d v_xi",
            varpi0.derive(sigma),
            weyl_part + lie_varpi - bracket - dv_xi,
            faulty=weyl_part + lie_varpi - bracket + dv_xi,
        ),
        make_check(
            "conf.sigma_omega0",
            CONFORMAL_ANCHORS["sigma_fields"],
            "sigma Omega0 = [Omega0, v0] + L_xi Omega0 - [v_xi, Omega0]",
            omega0.derive(sigma),
            commutator(omega0, v0) + lie_omega - omega_bracket,
            faulty=commutator(omega0, v0) + lie_omega + omega_bracket,
        ),
        make_check(
            "conf.sigma_v0_prime",
            CONFORMAL_ANCHORS["sigma_fields"],
            "sigma v0' = -v0' v0' + 1/2 i_xi i_xi Omega0",
            v0_prime.derive(sigma),
            -(v0_prime @ v0_prime) + half_ii,
            faulty=-(v0_prime @ v0_prime) - half_ii,
        ),
        make_check(
            "conf.weyl_abelian",
            CONFORMAL_ANCHORS["weyl_abelian"],
            "s_W eps = 0 for the bare and the dressed Weyl ghost",
            [
                MatrixExpr.column([scene.s_rules[ghost("eps")]]),
                lambda r: r.realize(v0.derive(scene.s))[0, 0],
            ],
            0,
            needs_oracle=True,
            faulty=[MatrixExpr.column([scene.sigma_rules[ghost("eps")]]), 0],
        ),
        compatibility_check(scene, fields),
    ]

    if is_normal(scene):
        checks += normal_checks(scene, single, first)
    else:
        checks += nonnormal_checks(scene, single)
    return checks


def verify_conformal_suite(
    scene: Optional[BrstScene] = None,
    checker: Optional[IdentityChecker] = None,
    m: int = 4,
    normal: bool = False,
) -> List[IdentityReport]:
    scene = scene or build_conformal_scene(m, normal)
    checker = checker or conformal_checker(scene)
    return checker.run(conformal_checks(scene))


__all__ = [
    "CONFORMAL_ANCHORS",
    "NORMAL_NOTE",
    "WEYL_SKIPPED",
    "ConformalDressing",
    "DressingStage",
    "build_conformal_scene",
    "conformal_checker",
    "conformal_checks",
    "conformal_dressing",
    "conformal_spec",
    "dress_conformal",
    "explicit_final_ghost",
    "riemannian_blocks",
    "verify_conformal_suite",
]
