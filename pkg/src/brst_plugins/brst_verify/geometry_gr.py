"""Cartan geometry of gravity: Poincare connection dressed by the vielbein.

varpi = [[A, theta], [0, 0]] with A in so(eta) and theta^a = e^a_mu dx^mu. Dressing
by u = diag(e, 1) gives varpi^ = [[Gamma, dx], [0, 0]], a linear connection with
torsion, and the shifted ghost v^' = i_xi varpi^ + v_xi.
"""
from __future__ import annotations

import logging
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Tuple

try:
    from .brst_engine import (
        BrstScene,
        Check,
        DressedScene,
        DressingField,
        IdentityChecker,
        SceneSpec,
        commutation_checks,
        define_brst_rules,
        dress_algebra,
        dressed_rule_checks,
        make_check,
        nilpotency_check,
        presentation_checks,
        scene_checker,
        shift_algebra,
        structure_checks,
    )
    from .formulas import (
        Block,
        Formula,
        Inverse,
        Realizer,
        Zero,
        commutator,
        identity,
        leaf,
    )
    from .graded_core import (
        BrstError,
        Expr,
        InversePair,
        antisymmetric_component,
        dx,
        expr_sum,
        field,
        ghost,
        interior_product,
        left_components,
        right_components,
        xi,
    )
    from .jet_oracle import (
        RIEMANN_CONVENTION,
        lie_derivative_components,
        riemann_from_connection,
        spin_connection_components,
    )
    from .matrix_forms import EtaMetric, MatrixExpr, build_lie_template
    from .reports import IdentityReport
except ImportError:
    from brst_engine import (
        BrstScene,
        Check,
        DressedScene,
        DressingField,
        IdentityChecker,
        SceneSpec,
        commutation_checks,
        define_brst_rules,
        dress_algebra,
        dressed_rule_checks,
        make_check,
        nilpotency_check,
        presentation_checks,
        scene_checker,
        shift_algebra,
        structure_checks,
    )
    from formulas import (
        Block,
        Formula,
        Inverse,
        Realizer,
        Zero,
        commutator,
        identity,
        leaf,
    )
    from graded_core import (
        BrstError,
        Expr,
        InversePair,
        antisymmetric_component,
        dx,
        expr_sum,
        field,
        ghost,
        interior_product,
        left_components,
        right_components,
        xi,
    )
    from jet_oracle import (
        RIEMANN_CONVENTION,
        lie_derivative_components,
        riemann_from_connection,
        spin_connection_components,
    )
    from matrix_forms import EtaMetric, MatrixExpr, build_lie_template
    from reports import IdentityReport

logger = logging.getLogger(__name__)

GR_ANCHORS = {
    "v_hat_zero": "the composite Lorentz ghost vanishes",
    "v_hat_prime": "composite shifted ghost defined",
    "sigma_varpi_hat": "matrix calculations now easily provide the algebra",
    "sigma_omega_hat": "matrix calculations now easily provide the algebra",
    "lie_gamma": "Lie derivative of the Christoffel symbols",
    "lie_riemann": "Lie derivatives of the Riemann and torsion tensors",
    "lie_torsion": "Lie derivatives of the Riemann and torsion tensors",
    "sigma_v_hat_prime": "This is redundant with",
    "sigma_e": "shifted BRST algebra with generators",
    "metric_invariant": "Lorentz invariance of the composite fields",
    "sigma_metric": "transformations under active diffeomorphisms of the metric tensor",
    "oracle": "Lie derivative of the Christoffel symbols",
}

Components = Dict[Tuple[int, ...], Expr]


def spin_generator(a: int, b: int, mu: int):
    """w_ab,mu for a < b; the connection is antisymmetric in (a, b)."""
    return field("w", a, b, mu)


def vielbein_matrix(m: int) -> MatrixExpr:
    return MatrixExpr.from_function(m, m, lambda a, mu: Expr.gen(field("e", a, mu)))


def gr_spec(
    m: int = 4, eta: Optional[EtaMetric] = None, jet_order: Optional[int] = None
) -> SceneSpec:
    """Poincare(m) connection and ghost with the vielbein as inverse pair."""
    eta = eta or EtaMetric.minkowski(m)
    template = build_lie_template("poincare", m, eta)
    n = m + 1

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

    def connection(i: int, j: int) -> Expr:
        if i < m and j < m:
            return lorentz(i, j, spin_form)
        if i < m and j == m:
            return expr_sum(
                Expr.gen(dx(mu)) * Expr.gen(field("e", i, mu)) for mu in range(m)
            )
        return Expr.zero()

    def lorentz_ghost(i: int, j: int) -> Expr:
        if i < m and j < m:
            return lorentz(i, j, lambda a, b: Expr.gen(ghost("c", a, b)))
        return Expr.zero()

    return SceneSpec(
        name="gr",
        dim=m,
        varpi=MatrixExpr.from_function(n, n, connection),
        ghost=MatrixExpr.from_function(n, n, lorentz_ghost),
        template=template,
        inverses=(InversePair("e", "einv", m),),
        xi_offset=0,
        jet_order=jet_order,
        metadata={
            "gauge_algebra": template.tag,
            "eta": eta.describe(),
            "riemann_convention": RIEMANN_CONVENTION,
        },
    )


def build_gr_scene(
    m: int = 4, eta: Optional[EtaMetric] = None, jet_order: Optional[int] = None
) -> BrstScene:
    """Gravitational scene with its sigma-rules; sigma e follows from sigma varpi."""
    if m < 2:
        raise BrstError(f"gravitational scene needs m >= 2, got {m}")
    scene = shift_algebra(define_brst_rules(gr_spec(m, eta, jet_order)))
    logger.info("gravitational scene built for m=%d", m)
    return scene


def vielbein_dressing(scene: BrstScene) -> DressingField:
    m = scene.dim
    pair = scene.calc.inverses["einv"]
    known = MatrixExpr.from_function(
        m, m, lambda i, j: Expr.gen(pair.inverse_entry(i, j))
    )
    e = leaf(vielbein_matrix(m), "e")
    u = Block([[e, Zero(m, 1)], [Zero(1, m), identity(1)]])
    uinv = Block([[Inverse(e, known=known), Zero(m, 1)], [Zero(1, m), identity(1)]])
    return DressingField("u", u, uinv)


def dress_gr_scene(scene: BrstScene) -> DressedScene:
    return dress_algebra(scene, vielbein_dressing(scene))


def eta_of(scene: BrstScene) -> EtaMetric:
    return scene.spec.template.eta


# Component extraction from realized matrices


def connection_components(varpi_hat: MatrixExpr, m: int) -> Components:
    """Gamma^rho_{nu mu} with varpi^(rho, nu) = Gamma^rho_{nu mu} dx^mu."""
    gamma: Components = {}
    for rho in range(m):
        for nu in range(m):
            parts = right_components(varpi_hat[rho, nu], 1)
            for mu in range(m):
                gamma[(rho, nu, mu)] = parts.get((mu,), Expr.zero())
    return gamma


def two_form_components(entry: Expr) -> Dict[Tuple[int, int], Expr]:
    return right_components(entry, 2)


def curvature_components(omega_hat: MatrixExpr, m: int) -> Components:
    """R^rho_{nu,mu sigma} from Omega^(rho, nu) = 1/2 R dx^mu dx^sigma."""
    riemann: Components = {}
    for rho in range(m):
        for nu in range(m):
            parts = two_form_components(omega_hat[rho, nu])
            for mu in range(m):
                for sigma in range(m):
                    riemann[(rho, nu, mu, sigma)] = antisymmetric_component(
                        parts, mu, sigma
                    )
    return riemann


def torsion_components(omega_hat: MatrixExpr, m: int) -> Components:
    """T^rho_{mu sigma} from the translation column of Omega^."""
    torsion: Components = {}
    for rho in range(m):
        parts = two_form_components(omega_hat[rho, m])
        for mu in range(m):
            for sigma in range(m):
                torsion[(rho, mu, sigma)] = antisymmetric_component(parts, mu, sigma)
    return torsion


def _xi(rho: int) -> Expr:
    return Expr.gen(xi(rho))


def _dxi(rho: int, *jet: int) -> Expr:
    g = xi(rho)
    for mu in jet:
        g = g.prolong(mu)
    return Expr.gen(g)


class ComponentSource:
    """Components of a dressed field and their first derivatives, per realizer."""

    def __init__(
        self,
        scene: BrstScene,
        formula: Formula,
        extract: Callable[[MatrixExpr, int], Components],
    ):
        self.scene = scene
        self.formula = formula
        self.extract = extract

    def values(self, r: Realizer) -> Components:
        return self.extract(r.realize(self.formula), self.scene.dim)

    def derivatives(self, r: Realizer) -> List[Components]:
        return [
            self.extract(r.realize(self.formula.derive(partial)), self.scene.dim)
            for partial in self.scene.calc.partials
        ]


def lie_connection_terms(
    gamma: Components, dgamma: List[Components], m: int, inhomogeneous: int = 1
) -> Components:
    """xi.dG + G^rho_{nu a} d_mu xi^a + G^rho_{a mu} d_nu xi^a - d_a xi^rho G^a_{nu mu}
    + d_mu d_nu xi^rho."""
    result: Components = {}
    for rho in range(m):
        for nu in range(m):
            for mu in range(m):
                terms = [_dxi(rho, nu, mu).scale(inhomogeneous)]
                for a in range(m):
                    terms += [
                        _xi(a) * dgamma[a][(rho, nu, mu)],
                        gamma[(rho, nu, a)] * _dxi(a, mu),
                        gamma[(rho, a, mu)] * _dxi(a, nu),
                        -(_dxi(rho, a) * gamma[(a, nu, mu)]),
                    ]
                result[(rho, nu, mu)] = expr_sum(terms)
    return result


def lie_riemann_terms(
    riemann: Components, driemann: List[Components], m: int, flip: int = 1
) -> Components:
    result: Components = {}
    for rho in range(m):
        for nu in range(m):
            for mu in range(m):
                for sigma in range(mu + 1, m):
                    terms = []
                    for a in range(m):
                        terms += [
                            _xi(a) * driemann[a][(rho, nu, mu, sigma)],
                            riemann[(rho, nu, a, sigma)] * _dxi(a, mu),
                            riemann[(rho, nu, mu, a)] * _dxi(a, sigma),
                            riemann[(rho, a, mu, sigma)] * _dxi(a, nu),
                            -(_dxi(rho, a) * riemann[(a, nu, mu, sigma)]).scale(flip),
                        ]
                    result[(rho, nu, mu, sigma)] = expr_sum(terms)
    return result


def lie_torsion_terms(
    torsion: Components, dtorsion: List[Components], m: int, flip: int = 1
) -> Components:
    result: Components = {}
    for rho in range(m):
        for mu in range(m):
            for sigma in range(mu + 1, m):
                terms = []
                for a in range(m):
                    terms += [
                        _xi(a) * dtorsion[a][(rho, mu, sigma)],
                        torsion[(rho, a, sigma)] * _dxi(a, mu),
                        torsion[(rho, mu, a)] * _dxi(a, sigma),
                        -(_dxi(rho, a) * torsion[(a, mu, sigma)]).scale(flip),
                    ]
                result[(rho, mu, sigma)] = expr_sum(terms)
    return result


def shifted_components(
    formula: Formula, scene: BrstScene, degree: int, columns: Optional[int] = None
) -> Callable[[Realizer], List[Expr]]:
    """Left dx-components of a realized (degree, 1) form, in sorted key order.

    Rows and columns run over the tensor block; `columns` selects a single column.
    """
    m = scene.dim

    def build(r: Realizer) -> List[Expr]:
        realized = r.realize(formula)
        values = []
        cols = range(m) if columns is None else (columns,)
        for rho in range(m):
            for nu in cols:
                parts = left_components(realized[rho, nu], degree)
                keys = [(mu,) for mu in range(m)] if degree == 1 else [
                    (mu, sigma) for mu in range(m) for sigma in range(mu + 1, m)
                ]
                values += [parts.get(key, Expr.zero()) for key in keys]
        return values

    return build


def _ordered(components: Components) -> List[Expr]:
    return [components[key] for key in sorted(components)]


def explicit_shifted_ghost(
    varpi_hat: ComponentSource, n: int, flip: int = 1
) -> Callable[[Realizer], MatrixExpr]:
    """v^' with entries Gamma^rho_{nu mu} xi^mu + d_nu xi^rho and xi^rho."""
    m = n - 1

    def build(r: Realizer) -> MatrixExpr:
        gamma = varpi_hat.values(r)

        def entry(i: int, j: int) -> Expr:
            if i == m:
                return Expr.zero()
            if j == m:
                return _xi(i)
            return expr_sum(
                [gamma[(i, j, mu)] * _xi(mu) for mu in range(m)]
                + [_dxi(i, j).scale(flip)]
            )

        return MatrixExpr.from_function(n, n, entry)

    return build


# Checks


def sigma_e_check(scene: BrstScene) -> Check:
    """sigma e^a_mu = s e^a_mu + xi^nu d_nu e^a_mu + e^a_nu d_mu xi^nu."""
    m = scene.dim
    keys = [(a, mu) for a in range(m) for mu in range(m)]
    lhs = MatrixExpr.column([scene.sigma_rules[field("e", a, mu)] for a, mu in keys])

    def expected(sign: int) -> MatrixExpr:
        values = []
        for a, mu in keys:
            terms = [scene.s_rules[field("e", a, mu)]]
            for nu in range(m):
                terms.append(_xi(nu) * Expr.gen(field("e", a, mu).prolong(nu)))
                terms.append(
                    (Expr.gen(field("e", a, nu)) * _dxi(nu, mu)).scale(sign)
                )
            values.append(expr_sum(terms))
        return MatrixExpr.column(values)

    return make_check(
        "gr.sigma_e",
        GR_ANCHORS["sigma_e"],
        "sigma e = s e + xi^nu d_nu e + e_nu d_mu xi^nu",
        lhs,
        expected(1),
        faulty=expected(-1),
    )


def metric_matrix(scene: BrstScene) -> MatrixExpr:
    """g_{mu nu} = eta_ab e^a_mu e^b_nu."""
    m = scene.dim
    eta = eta_of(scene)
    return MatrixExpr.from_function(
        m,
        m,
        lambda mu, nu: expr_sum(
            (Expr.gen(field("e", a, mu)) * Expr.gen(field("e", a, nu))).scale(
                eta.entry(a)
            )
            for a in range(m)
        ),
    )


def metric_checks(scene: BrstScene) -> List[Check]:
    m = scene.dim
    eta = eta_of(scene)
    g = metric_matrix(scene)
    half_variation = MatrixExpr.from_function(
        m,
        m,
        lambda mu, nu: expr_sum(
            (scene.s(Expr.gen(field("e", a, mu))) * Expr.gen(field("e", a, nu))).scale(
                eta.entry(a)
            )
            for a in range(m)
        ),
    )

    def lie_metric(sign: int) -> MatrixExpr:
        def entry(mu: int, nu: int) -> Expr:
            terms = []
            for a in range(m):
                terms.append(_xi(a) * scene.calc.partials[a](g[mu, nu]))
                terms.append(g[a, nu] * _dxi(a, mu))
                terms.append((g[mu, a] * _dxi(a, nu)).scale(sign))
            return expr_sum(terms)

        return MatrixExpr.from_function(m, m, entry)

    return [
        make_check(
            "gr.metric_invariant",
            GR_ANCHORS["metric_invariant"],
            "s g = 0 for g = e^T eta e",
            g.apply(scene.s),
            0,
            faulty=half_variation,
        ),
        make_check(
            "gr.sigma_metric",
            GR_ANCHORS["sigma_metric"],
            "sigma g = L_xi g",
            g.apply(scene.operator("sigma")),
            lie_metric(1),
            faulty=lie_metric(-1),
        ),
    ]


def gr_checks(scene: BrstScene) -> List[Check]:
    """Every gravitational identity: algebra, dressing and component forms."""
    m, n = scene.dim, scene.size
    sigma, i_xi = scene.operator("sigma"), scene.i_xi
    dressed = dress_gr_scene(scene)
    varpi_hat, omega_hat = dressed.varpi, dressed.omega
    u, uinv = dressed.dressing.field, dressed.dressing.inverse
    v_xi = scene.xi_ghost()
    connection = ComponentSource(scene, varpi_hat, connection_components)
    curvature = ComponentSource(scene, omega_hat, curvature_components)
    torsion = ComponentSource(scene, omega_hat, torsion_components)

    checks = [nilpotency_check(scene, "s"), nilpotency_check(scene, "sigma")]
    checks += structure_checks(scene)
    checks += presentation_checks(scene)
    checks += [sigma_e_check(scene)]
    checks += metric_checks(scene)
    checks += dressed_rule_checks(dressed)

    checks.append(
        make_check(
            "gr.v_hat_zero",
            GR_ANCHORS["v_hat_zero"],
            "v^ = u^-1 v u + u^-1 s u = 0",
            dressed.ghost,
            0,
            faulty=(uinv @ u.derive(scene.s)).scale(2),
        )
    )
    result = commutation_checks(dressed, "tensorial")
    checks += [result.check, result.ghost_check]
    checks.append(
        make_check(
            "gr.v_hat_prime.entries",
            GR_ANCHORS["v_hat_prime"],
            "v^' = [[Gamma^rho_{nu mu} xi^mu + d_nu xi^rho, xi^rho], [0, 0]]",
            dressed.ghost_prime,
            explicit_shifted_ghost(connection, n),
            needs_oracle=True,
            faulty=explicit_shifted_ghost(connection, n, -1),
        )
    )

    lie_hat = scene.lie(varpi_hat)
    bracket = commutator(varpi_hat, v_xi)
    dv_xi = v_xi.derive(scene.d)
    checks.append(
        make_check(
            "gr.sigma_varpi_hat",
            GR_ANCHORS["sigma_varpi_hat"],
            "sigma varpi^ = L_xi varpi^ - [varpi^, v_xi] - d v_xi",
            varpi_hat.derive(sigma),
            lie_hat - bracket - dv_xi,
            faulty=lie_hat - bracket + dv_xi,
        )
    )
    lie_omega = scene.lie(omega_hat)
    omega_bracket = commutator(omega_hat, v_xi)
    checks.append(
        make_check(
            "gr.sigma_omega_hat",
            GR_ANCHORS["sigma_omega_hat"],
            "sigma Omega^ = L_xi Omega^ + [Omega^, v_xi]",
            omega_hat.derive(sigma),
            lie_omega + omega_bracket,
            faulty=lie_omega - omega_bracket,
        )
    )

    sigma_varpi = shifted_components(varpi_hat.derive(sigma), scene, 1)
    sigma_omega = shifted_components(omega_hat.derive(sigma), scene, 2)
    sigma_torsion = shifted_components(omega_hat.derive(sigma), scene, 2, columns=m)

    def gamma_side(inhomogeneous: int) -> Callable[[Realizer], List[Expr]]:
        return lambda r: _ordered(
            lie_connection_terms(
                connection.values(r), connection.derivatives(r), m, inhomogeneous
            )
        )

    def riemann_side(flip: int) -> Callable[[Realizer], List[Expr]]:
        return lambda r: _ordered(
            lie_riemann_terms(curvature.values(r), curvature.derivatives(r), m, flip)
        )

    def torsion_side(flip: int) -> Callable[[Realizer], List[Expr]]:
        return lambda r: _ordered(
            lie_torsion_terms(torsion.values(r), torsion.derivatives(r), m, flip)
        )

    checks += [
        make_check(
            "gr.lie_gamma",
            GR_ANCHORS["lie_gamma"],
            "sigma Gamma^rho_{nu mu} = L_xi Gamma^rho_{nu mu} + d_mu d_nu xi^rho",
            sigma_varpi,
            gamma_side(1),
            needs_oracle=True,
            faulty=gamma_side(-1),
        ),
        make_check(
            "gr.lie_riemann",
            GR_ANCHORS["lie_riemann"],
            "sigma R^rho_{nu,mu sigma} = L_xi R^rho_{nu,mu sigma}",
            sigma_omega,
            riemann_side(1),
            needs_oracle=True,
            faulty=riemann_side(-1),
        ),
        make_check(
            "gr.lie_torsion",
            GR_ANCHORS["lie_torsion"],
            "sigma T^rho_{mu sigma} = L_xi T^rho_{mu sigma}",
            sigma_torsion,
            torsion_side(1),
            needs_oracle=True,
            faulty=torsion_side(-1),
        ),
    ]
    checks += oracle_checks(scene, sigma_varpi, sigma_omega)
    checks.append(sigma_shifted_ghost_check(scene, dressed))
    return checks


def oracle_checks(
    scene: BrstScene,
    sigma_varpi: Callable[[Realizer], List[Expr]],
    sigma_omega: Callable[[Realizer], List[Expr]],
) -> List[Check]:
    """The same component identities with the right side built by the jet oracle."""
    eta = eta_of(scene)

    def oracle_gamma(r: Realizer) -> List[Expr]:
        gamma = spin_connection_components(r.context, eta)
        return _ordered(
            lie_derivative_components(r.context, gamma, "udd", connection=True)
        )

    def oracle_riemann(r: Realizer) -> List[Expr]:
        spec = r.context
        riemann = riemann_from_connection(spec, spin_connection_components(spec, eta))
        lie_r = lie_derivative_components(spec, riemann, "uddd")
        return [lie_r[key] for key in sorted(lie_r) if key[2] < key[3]]

    def negated(side: Callable[[Realizer], List[Expr]]):
        return lambda r: [-x for x in side(r)]

    return [
        make_check(
            "gr.oracle_gamma",
            GR_ANCHORS["oracle"],
            "sigma Gamma against L_xi Gamma from the sampled fields",
            sigma_varpi,
            oracle_gamma,
            needs_oracle=True,
            faulty=negated(oracle_gamma),
        ),
        make_check(
            "gr.oracle_riemann",
            GR_ANCHORS["lie_riemann"],
            "sigma R against L_xi R from the sampled fields",
            sigma_omega,
            oracle_riemann,
            needs_oracle=True,
            faulty=negated(oracle_riemann),
        ),
    ]


def sigma_shifted_ghost_check(scene: BrstScene, dressed: DressedScene) -> Check:
    """sigma v^' from the sigma-rules against its expression through varpi^ and v_xi."""
    varpi_hat = dressed.varpi
    v_xi = scene.xi_ghost()
    i_varpi = varpi_hat.derive(scene.i_xi)
    half_bracket = [part / 2 for part in scene.calc.xi_bracket()]
    i_bracket = interior_product(scene.dim, half_bracket, ghost_number=2)
    head = (
        scene.lie(i_varpi)
        - commutator(i_varpi, v_xi)
        + scene.lie(v_xi)
        - commutator(v_xi, v_xi).scale(Fraction(1, 2))
        - v_xi.derive(scene.d).derive(scene.i_xi)
    )
    tail = varpi_hat.derive(i_bracket)
    return make_check(
        "gr.sigma_v_hat_prime",
        GR_ANCHORS["sigma_v_hat_prime"],
        "sigma v^' = L_xi i_xi varpi^ - [i_xi varpi^, v_xi] + L_xi v_xi"
        " - 1/2 [v_xi, v_xi] - i_xi d v_xi - i_{1/2[xi,xi]} varpi^",
        dressed.ghost_prime.derive(scene.operator("sigma")),
        head - tail,
        note="implied by sigma varpi^ and the decomposition of v^'",
        faulty=head + tail,
    )


def verify_gr_suite(
    scene: Optional[BrstScene] = None,
    checker: Optional[IdentityChecker] = None,
    m: int = 4,
) -> List[IdentityReport]:
    scene = scene or build_gr_scene(m)
    checker = checker or scene_checker(scene)
    return checker.run(gr_checks(scene))


__all__ = [
    "build_gr_scene",
    "connection_components",
    "curvature_components",
    "dress_gr_scene",
    "gr_checks",
    "gr_spec",
    "metric_matrix",
    "torsion_components",
    "verify_gr_suite",
    "vielbein_dressing",
]
