import dataclasses
from unittest import TestCase

import pytest

try:
    from .brst_engine import (
        CheckSettings,
        DressingField,
        MissingFieldError,
        RuleClosureError,
        SceneSpec,
        build_yang_mills_scene,
        check_nilpotency,
        commutation_test,
        define_brst_rules,
        dress_algebra,
        expand_horizontality,
        presentation_checks,
        residual_of,
        residual_ghost,
        dressing_matrix,
        scene_checker,
        verify_yang_mills_suite,
        yang_mills_dressing,
        yang_mills_spec,
    )
    from .formulas import leaf
    from .graded_core import Bidegree, BrstError, Expr, dx, field, ghost, xi
    from .matrix_forms import MatrixExpr
except ImportError:
    from brst_engine import (
        CheckSettings,
        DressingField,
        MissingFieldError,
        RuleClosureError,
        SceneSpec,
        build_yang_mills_scene,
        check_nilpotency,
        commutation_test,
        define_brst_rules,
        dress_algebra,
        expand_horizontality,
        presentation_checks,
        residual_of,
        residual_ghost,
        dressing_matrix,
        scene_checker,
        verify_yang_mills_suite,
        yang_mills_dressing,
        yang_mills_spec,
    )
    from formulas import leaf
    from graded_core import Bidegree, BrstError, Expr, dx, field, ghost, xi
    from matrix_forms import MatrixExpr


def settings(**overrides):
    values = {"seed": "engine-tests", "trials": 2}
    values.update(overrides)
    return CheckSettings(**values)


class TestYangMillsRules(TestCase):
    def setUp(self):
        self.scene = build_yang_mills_scene(2, 2)

    def test_connection_rule_components(self):
        rule = self.scene.s_rules[field("A", 0, 1, 0)]
        self.assertIn(ghost("v", 0, 1).prolong(0), rule.generators())
        self.assertEqual(rule.bidegree, Bidegree(0, 1))
        self.assertEqual(self.scene.s_rules[ghost("v", 0, 0)].bidegree, Bidegree(0, 2))

    def test_sigma_acts_on_xi_by_half_bracket(self):
        rule = self.scene.sigma_rules[xi(0)]
        expected = Expr.gen(xi(0)) * Expr.gen(xi(0).prolong(0)) + Expr.gen(
            xi(1)
        ) * Expr.gen(xi(0).prolong(1))
        self.assertEqual(rule, expected)

    def test_nilpotency(self):
        for operator in ("s", "sigma"):
            report = check_nilpotency(self.scene, operator, scene_checker(self.scene))
            self.assertTrue(report.passed, report.residual)
            self.assertEqual(report.identity_id, f"ym.nilpotency.{operator}")

    def test_dropped_ghost_rule_breaks_nilpotency(self):
        scene = build_yang_mills_scene(2, 2, drop_ghost_rule=True)
        report = check_nilpotency(scene, "s")
        self.assertFalse(report.passed)
        self.assertGreater(report.residual_term_count, 0)

    def test_unshifted_scene_has_no_sigma(self):
        scene = define_brst_rules(yang_mills_spec(2, 2))
        with self.assertRaises(MissingFieldError) as e:
            scene.operator("sigma")
        self.assertEqual(str(e.exception), "scene ym has not been shifted")

    def test_constant_entry_with_moving_image(self):
        a00 = Expr.gen(dx(0)) * Expr.gen(field("A", 0, 0, 0))
        varpi = MatrixExpr([[a00, Expr.zero()], [Expr.zero(), a00]])
        v = MatrixExpr.from_function(2, 2, lambda i, j: Expr.gen(ghost("v", i, j)))
        with self.assertRaises(RuleClosureError) as e:
            define_brst_rules(SceneSpec("broken", 1, varpi, v))
        self.assertTrue(
            str(e.exception).startswith(
                "rule table not closing: entry (0,1) is constant but its s-image is"
            )
        )

    def test_postulate_outside_roster(self):
        spec = yang_mills_spec(2, 2, matter=False, dressing=None)
        u, lam = dressing_matrix(2), residual_ghost(2)
        spec = dataclasses.replace(spec, postulated=((u, u @ lam),))
        with self.assertRaises(RuleClosureError) as e:
            define_brst_rules(spec)
        self.assertIn("outside the roster", str(e.exception))

    def test_tensorial_dressing_needs_square_index_block(self):
        with self.assertRaises(BrstError) as e:
            yang_mills_spec(2, 3, dressing="tensorial")
        self.assertEqual(
            str(e.exception),
            "tensorial dressing needs matrix size 2 equal to dimension 3",
        )


class TestHorizontality(TestCase):
    def setUp(self):
        self.scene = build_yang_mills_scene(2, 2)
        self.checker = scene_checker(self.scene, settings())

    def test_russian_formula_components(self):
        for which in ("russian", "shifted_russian"):
            reports = expand_horizontality(self.scene, which, checker=self.checker)
            self.assertEqual(
                sorted(reports), [Bidegree(0, 2), Bidegree(1, 1), Bidegree(2, 0)]
            )
            for report in reports.values():
                self.assertTrue(
                    report.passed, f"{report.identity_id}: {report.residual}"
                )

    def test_matter_components(self):
        for which in ("matter", "shifted_matter"):
            reports = expand_horizontality(self.scene, which, checker=self.checker)
            self.assertEqual(sorted(reports), [Bidegree(0, 1), Bidegree(1, 0)])
            self.assertTrue(all(r.passed for r in reports.values()))

    def test_matter_condition_without_matter(self):
        scene = build_yang_mills_scene(2, 2, matter=False, dressing=None)
        with self.assertRaises(MissingFieldError) as e:
            expand_horizontality(scene, "matter")
        self.assertEqual(str(e.exception), "scene ym has no matter field")

    def test_injected_fault_is_reported(self):
        checker = scene_checker(self.scene, settings(), faults={"ym.russian.11"})
        reports = expand_horizontality(self.scene, "russian", checker=checker)
        self.assertFalse(reports[Bidegree(1, 1)].passed)
        self.assertTrue(reports[Bidegree(2, 0)].passed)

    def test_presentation(self):
        for item in presentation_checks(self.scene):
            report = self.checker.check(item)
            self.assertTrue(report.passed, f"{item.identity_id}: {report.residual}")

    def test_randomized_mode_agrees(self):
        checker = scene_checker(self.scene, settings(mode="both"))
        reports = expand_horizontality(self.scene, "shifted_russian", checker=checker)
        for report in reports.values():
            self.assertTrue(report.passed)
            self.assertEqual(report.mode, "both")
            self.assertEqual(report.trials, 2)


class TestDressing(TestCase):
    def test_commuting_dressing(self):
        scene = build_yang_mills_scene(2, 2, dressing="commuting")
        dressed = dress_algebra(scene, yang_mills_dressing(scene))
        report, obstruction = commutation_test(
            dressed, "none", scene_checker(scene, settings())
        )
        self.assertTrue(report.passed, report.residual)
        self.assertTrue(obstruction.is_zero)
        self.assertEqual(report.note, "obstruction type: none")

    def test_tensorial_dressing(self):
        scene = build_yang_mills_scene(2, 2, dressing="tensorial")
        dressed = dress_algebra(scene, yang_mills_dressing(scene))
        checker = scene_checker(scene, settings())
        report, obstruction = commutation_test(dressed, "tensorial", checker)
        self.assertTrue(report.passed, report.residual)
        self.assertFalse(obstruction.is_zero)
        self.assertEqual(report.note, "obstruction type: tensorial")
        wrong, _ = commutation_test(dressed, "none", checker)
        self.assertFalse(wrong.passed)

    def test_dressing_without_inverse(self):
        scene = build_yang_mills_scene(2, 2)
        u = leaf(dressing_matrix(2), "u")
        with self.assertRaises(MissingFieldError) as e:
            dress_algebra(scene, DressingField("u", u, None))
        self.assertEqual(str(e.exception), "dressing field u has no inverse")

    def test_dressing_of_wrong_shape(self):
        scene = build_yang_mills_scene(2, 2)
        u = leaf(dressing_matrix(3), "u")
        with self.assertRaises(MissingFieldError):
            dress_algebra(scene, DressingField("u", u, u))

    def test_full_suite(self):
        for dressing in ("commuting", "tensorial"):
            scene = build_yang_mills_scene(2, 2, dressing=dressing)
            reports = verify_yang_mills_suite(
                scene, dressing, scene_checker(scene, settings(trials=1))
            )
            failed = [r.identity_id for r in reports if not r.passed]
            self.assertEqual(failed, [])


def test_residual_of_zero_scalar_against_matrix():
    x = Expr.gen(field("f"))
    assert residual_of(MatrixExpr([[x, x]]), Expr.zero()) == [x, x]
    assert residual_of([x], [x]) == [Expr.zero()]
    with pytest.raises(BrstError):
        residual_of([x, x, x], [x, x])


def test_settings_from_environment(monkeypatch):
    monkeypatch.setenv("BRST_TRIALS", "3")
    monkeypatch.setenv("BRST_SEED", "abc")
    loaded = CheckSettings.from_env(mode="both", workers=None)
    assert loaded.trials == 3
    assert loaded.seed == "abc"
    assert loaded.workers == 1
    assert loaded.mode == "both"


def test_settings_reject_unknown_mode():
    with pytest.raises(BrstError, match="unknown mode 'exact'"):
        CheckSettings.from_env(mode="exact")
    with pytest.raises(BrstError, match="at least one randomized trial"):
        CheckSettings.from_env(trials=0)


def test_parallel_workers_keep_order():
    scene = build_yang_mills_scene(2, 2, dressing=None)
    checks = presentation_checks(scene)
    reports = scene_checker(scene, settings(workers=3)).run(checks)
    assert [r.identity_id for r in reports] == [c.identity_id for c in checks]
