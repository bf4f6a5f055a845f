from unittest import TestCase

try:
    from .brst_engine import CheckSettings
    from .formulas import PointRealizer
    from .geometry_conformal import (
        NORMAL_NOTE,
        WEYL_SKIPPED,
        build_conformal_scene,
        conformal_checker,
        conformal_checks,
        conformal_oracle,
        dress_conformal,
        verify_conformal_suite,
    )
    from .graded_core import BrstError, Expr, Kind, dx, field, ghost
    from .jet_oracle import RIEMANN_CONVENTION
    from .matrix_forms import EtaMetric
except ImportError:
    from brst_engine import CheckSettings
    from formulas import PointRealizer
    from geometry_conformal import (
        NORMAL_NOTE,
        WEYL_SKIPPED,
        build_conformal_scene,
        conformal_checker,
        conformal_checks,
        conformal_oracle,
        dress_conformal,
        verify_conformal_suite,
    )
    from graded_core import BrstError, Expr, Kind, dx, field, ghost
    from jet_oracle import RIEMANN_CONVENTION
    from matrix_forms import EtaMetric

SYMBOLIC = [
    "conf.template",
    "conf.nilpotency.s",
    "conf.nilpotency.sigma",
    "conf.structure",
    "conf.bianchi",
    "conf.presentation.A",
    "conf.presentation.v",
    "conf.obstruction",
]

DRESSED = [
    "conf.sigma_q",
    "conf.stage1.obstruction",
    "conf.stage1_commute",
    "conf.commutation",
    "conf.v_hat_prime",
    "conf.v0_prime.matrix",
    "conf.v0_prime.redundancy",
    "conf.single_step_equal",
    "conf.sigma_varpi0",
    "conf.sigma_omega0",
    "conf.sigma_v0_prime",
    "conf.weyl_abelian",
    "conf.first_order_compat",
]

NORMAL = [
    "conf.lie_g",
    "conf.lie_gamma",
    "conf.lie_schouten",
    "conf.lie_cotton",
    "conf.lie_weyl",
    "conf.normality_preserved",
    "conf.riemannian_frame",
    "conf.schouten_crosscheck",
]

NONNORMAL = ["conf.nonnormal_torsion", "conf.nonnormal_trace"]


def normal_ids(m):
    return [i for i in NORMAL if m >= 4 or i != "conf.lie_weyl"]


def settings(**overrides):
    values = {"seed": "conformal-tests", "trials": 1}
    values.update(overrides)
    return CheckSettings(**values)


def ghost_names(matrix):
    return {
        g.name
        for row in matrix.entries
        for x in row
        for g in x.generators()
        if g.kind == Kind.GHOST
    }



class TestConformalScene(TestCase):
    M = 3

    @classmethod
    def setUpClass(cls):
        cls.scene = build_conformal_scene(cls.M, jet_order=3)
        cls.checks = {item.identity_id: item for item in conformal_checks(cls.scene)}

    def setUp(self):
        self.checker = conformal_checker(self.scene, settings())

    def realizer(self, label):
        spec = conformal_oracle(self.scene)(label)
        return PointRealizer(spec.jet, spec)

    def test_rule_tables(self):
        self.assertIn(field("alpha", 0, 1), self.scene.s_rules)
        self.assertIn(ghost("iota", 2), self.scene.sigma_rules)
        self.assertEqual(self.scene.s_rules[ghost("eps")], Expr.zero())
        metadata = self.scene.metadata()
        self.assertEqual(metadata["template"], f"mobius({self.M})")
        self.assertFalse(metadata["normal"])
        self.assertNotIn("normal_constraints", metadata)
        self.assertEqual(metadata["riemann_convention"], RIEMANN_CONVENTION)

    def test_identity_lists(self):
        self.assertEqual(
            sorted(set(SYMBOLIC + DRESSED + NONNORMAL) - set(self.checks)), []
        )
        self.assertFalse(set(NORMAL) & set(self.checks))

    def test_template_check_is_a_zero_column(self):
        item = self.checks["conf.template"]
        self.assertFalse(item.needs_oracle)
        self.assertTrue(item.lhs.is_zero)
        self.assertGreater(item.lhs.rows, 0)

    def test_symbolic_identities(self):
        for identity_id in SYMBOLIC:
            report = self.checker.check(self.checks[identity_id])
            self.assertTrue(report.passed, f"{identity_id}: {report.residual}")
            self.assertEqual(report.tier, 1)

    def test_dressed_identities(self):
        for identity_id in DRESSED + NONNORMAL:
            report = self.checker.check(self.checks[identity_id])
            self.assertTrue(report.passed, f"{identity_id}: {report.residual}")
            self.assertEqual(report.tier, 2)

    def test_first_dressing_removes_the_special_conformal_ghost(self):
        first = dress_conformal(self.scene, "stage1")
        r = self.realizer("stage1")
        self.assertNotIn("iota", ghost_names(r.realize(first.ghost)))
        self.assertFalse(r.realize(first.varpi)[0, 0])

    def test_final_ghost_is_the_weyl_ghost(self):
        last = self.M + 1
        single = dress_conformal(self.scene, "single")
        r = self.realizer("single")
        ghost_hat = r.realize(single.ghost)
        self.assertEqual(ghost_names(ghost_hat), {"eps"})
        self.assertEqual(ghost_hat[0, 0], Expr.gen(ghost("eps")))
        self.assertEqual(ghost_hat[last, last], -Expr.gen(ghost("eps")))
        varpi0 = r.realize(single.varpi)
        for rho in range(self.M):
            self.assertEqual(varpi0[1 + rho, 0], Expr.gen(dx(rho)))

    def test_injected_faults_are_caught(self):
        faulty = [
            "conf.sigma_q",
            "conf.obstruction",
            "conf.v0_prime.matrix",
            "conf.single_step_equal",
            "conf.weyl_abelian",
            "conf.first_order_compat",
            "conf.nonnormal_torsion",
        ]
        checker = conformal_checker(self.scene, settings(), faults=faulty)
        for identity_id in faulty:
            report = checker.check(self.checks[identity_id])
            self.assertFalse(report.passed, identity_id)
            self.assertGreater(report.residual_term_count, 0)

    def test_unknown_stage(self):
        with self.assertRaises(BrstError) as e:
            dress_conformal(self.scene, "stage3")
        self.assertIn("unknown dressing stage 'stage3'", str(e.exception))

    def test_dimension_two_is_rejected(self):
        with self.assertRaises(BrstError) as e:
            build_conformal_scene(2)
        self.assertEqual(str(e.exception), "conformal scene needs m >= 3, got 2")


class TestConformalSceneFour(TestConformalScene):
    M = 4


class TestNormalConformalScene(TestCase):
    M = 3

    @classmethod
    def setUpClass(cls):
        cls.scene = build_conformal_scene(cls.M, normal=True, jet_order=3)
        cls.checks = {item.identity_id: item for item in conformal_checks(cls.scene)}

    def test_whole_suite_passes(self):
        checker = conformal_checker(self.scene, settings())
        reports = verify_conformal_suite(self.scene, checker)
        self.assertEqual([r.identity_id for r in reports if not r.passed], [])
        self.assertEqual(len(reports), len(self.checks))
        self.assertFalse(set(NONNORMAL) & set(self.checks))
        for r in reports:
            if r.identity_id in NORMAL:
                self.assertEqual(r.tier, 2, r.identity_id)

    def test_normal_identity_list(self):
        self.assertEqual(sorted(set(normal_ids(self.M)) - set(self.checks)), [])

    def test_lie_derivative_fault(self):
        checker = conformal_checker(
            self.scene, settings(), faults={"conf.lie_schouten"}
        )
        self.assertFalse(checker.check(self.checks["conf.lie_schouten"]).passed)

    def test_report_metadata(self):
        metadata = self.scene.metadata()
        self.assertTrue(metadata["normal"])
        self.assertIn("first order", metadata["compatibility"])
        self.assertEqual(metadata["normal_constraints"], NORMAL_NOTE)
        self.assertEqual(metadata["riemann_convention"], RIEMANN_CONVENTION)

    def test_weyl_runs_from_dimension_four(self):
        if self.M < 4:
            self.assertNotIn("conf.lie_weyl", self.checks)
            self.assertIn("conf.lie_cotton", self.checks)
            self.assertEqual(self.scene.metadata()["weyl"], WEYL_SKIPPED)
            return
        self.assertEqual(self.scene.metadata()["weyl"], "checked")
        checker = conformal_checker(self.scene, settings(), faults={"conf.lie_weyl"})
        self.assertFalse(checker.check(self.checks["conf.lie_weyl"]).passed)


class TestNormalConformalSceneFour(TestNormalConformalScene):
    M = 4


def test_euclidean_conformal_scene():
    scene = build_conformal_scene(3, eta=EtaMetric.euclidean(3), jet_order=3)
    checks = {item.identity_id: item for item in conformal_checks(scene)}
    checker = conformal_checker(scene, settings())
    assert checker.check(checks["conf.template"]).passed
    assert checker.check(checks["conf.v0_prime.matrix"]).passed
    assert scene.metadata()["eta"] == "diag(1,1,1)"
