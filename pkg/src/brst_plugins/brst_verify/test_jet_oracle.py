from fractions import Fraction
from unittest import TestCase

import pytest

try:
    from .graded_core import Expr, InversePair, JetCalculus, field, ghost, xi
    from .jet_oracle import (
        FieldSpec,
        OracleError,
        central_difference,
        component_values,
        crosscheck_identity,
        curvature_pipeline,
        extrapolated_derivative,
        gamma_by_differences,
        lie_derivative_components,
        metric_from_vielbein,
        normal_conformal_fields,
    )
    from .formulas import PointRealizer
    from .matrix_forms import EtaMetric
except ImportError:
    from graded_core import Expr, InversePair, JetCalculus, field, ghost, xi
    from jet_oracle import (
        FieldSpec,
        OracleError,
        central_difference,
        component_values,
        crosscheck_identity,
        curvature_pipeline,
        extrapolated_derivative,
        gamma_by_differences,
        lie_derivative_components,
        metric_from_vielbein,
        normal_conformal_fields,
    )
    from formulas import PointRealizer
    from matrix_forms import EtaMetric


def vielbein_spec(m, label, jet_order=4, **kwargs):
    return FieldSpec(
        m, label, inverses=(InversePair("e", "einv", m),), jet_order=jet_order, **kwargs
    )


def curvature_of(spec, eta):
    e = spec.field_matrix("e", spec.dim, spec.dim)
    return curvature_pipeline(spec, metric_from_vielbein(spec, e, eta))


def all_zero(spec, components):
    return all(value == 0 for value in component_values(spec, components).values())


class TestFieldSpec(TestCase):
    def setUp(self):
        self.spec = vielbein_spec(2, "oracle-tests")

    def test_same_label_same_fields(self):
        other = vielbein_spec(2, "oracle-tests")
        self.assertEqual(self.spec.point, other.point)
        self.assertEqual(self.spec.series("e", (0, 1)), other.series("e", (0, 1)))
        g = field("e", 1, 0).prolong(0).prolong(1)
        self.assertEqual(self.spec.jet(g), other.jet(g))

    def test_labels_separate_fields(self):
        other = vielbein_spec(2, "oracle-tests-2")
        self.assertNotEqual(self.spec.series("e", (0, 1)), other.series("e", (0, 1)))

    def test_jet_value_carries_factorials(self):
        h0, h1 = self.spec.h
        self.assertEqual(self.spec.jet_value(h0**2 * h1, (0, 1, 0)), 2)
        self.assertEqual(self.spec.jet_value(h0**2 * h1, (1,)), 0)

    def test_unmapped_generator(self):
        spec = FieldSpec(2, "names", names={"A"})
        with self.assertRaises(OracleError) as e:
            spec.jet(field("B"))
        self.assertEqual(str(e.exception), "no oracle field for generator B[]")
        with self.assertRaises(OracleError) as e:
            spec.jet(ghost("c"))
        self.assertEqual(str(e.exception), "no oracle field for generator c")

    def test_jet_order_limit(self):
        spec = FieldSpec(1, "order", jet_order=1)
        with self.assertRaises(OracleError):
            spec.jet(field("f").prolong(0).prolong(0))

    def test_inverse_jets_agree_with_closed_form_rule(self):
        pair = InversePair("e", "einv", 2)
        calc = JetCalculus(2, jet_order=2, inverses={"einv": pair})
        realizer = PointRealizer(self.spec.jet, self.spec)
        for i, j, mu in ((0, 1, 0), (1, 1, 1)):
            derived = calc.partials[mu](Expr.gen(field("einv", i, j)))
            expected = self.spec.jet(field("einv", i, j).prolong(mu))
            self.assertEqual(realizer.evaluate(derived), Expr.const(expected))

    def test_divided_difference_error_term(self):
        p = self.spec.polynomial("e", (0, 0))
        t = Fraction(1, 5)
        first = self.spec.jet_value(p, (0,))
        third = self.spec.jet_value(p, (0, 0, 0))
        self.assertEqual(
            central_difference(self.spec, p, 0, t) - first, t * t / 6 * third
        )
        self.assertEqual(extrapolated_derivative(self.spec, p, 0, t), first)


class TestCurvature(TestCase):
    def test_flat_vielbein(self):
        def constant_frame(spec):
            return {
                ("e", (a, mu)): spec.constant(1 if a == mu else 0)
                for a in range(3)
                for mu in range(3)
            }

        spec = vielbein_spec(3, "flat", jet_order=1, overrides=constant_frame)
        curvature = curvature_of(spec, EtaMetric.euclidean(3))
        self.assertTrue(all_zero(spec, curvature.gamma))
        self.assertTrue(all_zero(spec, curvature.riemann))
        self.assertTrue(all_zero(spec, curvature.schouten))

    def test_finite_differences_match_christoffel_symbols(self):
        eta = EtaMetric.minkowski(2)
        spec = vielbein_spec(2, "differences")
        expected = component_values(spec, curvature_of(spec, eta).gamma)
        self.assertEqual(gamma_by_differences(spec, "e", eta), expected)

    def test_conformally_flat_metric(self):
        def conformal_frame(spec):
            h = spec.h
            phi = (
                spec.ring.one
                + spec.constant(Fraction(1, 2)) * h[0]
                + h[0] * h[1]
                - h[2] ** 2 * 2
                + h[3]
            )
            return {
                ("e", (a, mu)): phi if a == mu else spec.ring.zero
                for a in range(4)
                for mu in range(4)
            }

        spec = vielbein_spec(4, "conformal", jet_order=1, overrides=conformal_frame)
        curvature = curvature_of(spec, EtaMetric.euclidean(4))
        self.assertFalse(all_zero(spec, curvature.riemann))
        self.assertTrue(all_zero(spec, curvature.weyl))
        self.assertTrue(all_zero(spec, curvature.cotton))

    def test_weyl_vanishes_in_three_dimensions(self):
        spec = vielbein_spec(3, "three", jet_order=1)
        curvature = curvature_of(spec, EtaMetric.minkowski(3))
        self.assertTrue(all_zero(spec, curvature.weyl))
        self.assertFalse(all_zero(spec, curvature.schouten))

    def test_two_dimensions_have_no_schouten(self):
        spec = vielbein_spec(2, "two", jet_order=1)
        curvature = curvature_of(spec, EtaMetric.minkowski(2))
        self.assertEqual(curvature.schouten, {})
        self.assertEqual(curvature.weyl, {})

    def test_shallow_truncation_is_rejected(self):
        spec = vielbein_spec(2, "shallow", jet_order=0)
        with self.assertRaises(OracleError):
            curvature_of(spec, EtaMetric.minkowski(2))


class TestLieDerivative(TestCase):
    def test_metric_lie_derivative(self):
        spec = vielbein_spec(2, "lie")
        metric = curvature_of(spec, EtaMetric.minkowski(2)).metric
        components = {(mu, nu): metric[mu][nu] for mu in range(2) for nu in range(2)}
        lie = lie_derivative_components(spec, components, "dd")

        def value(p, *jet):
            return spec.jet_value(p, jet)

        for (mu, nu), expr in lie.items():
            expected = Expr.zero()
            for a in range(2):
                expected = expected + Expr.gen(xi(a), value(metric[mu][nu], a))
                expected = expected + Expr.gen(xi(a).prolong(mu), value(metric[a][nu]))
                expected = expected + Expr.gen(xi(a).prolong(nu), value(metric[mu][a]))
            self.assertEqual(expr, expected)

    def test_valence_mismatch(self):
        spec = FieldSpec(2, "valence")
        with self.assertRaises(OracleError) as e:
            lie_derivative_components(spec, {(0, 1): spec.ring.one}, "u")
        self.assertEqual(
            str(e.exception), "valence 'u' does not match the tensor components"
        )
        with self.assertRaises(OracleError):
            lie_derivative_components(
                spec, {(0, 1): spec.ring.one}, "dd", connection=True
            )


class TestNormalConformalFields(TestCase):
    def test_builder_keeps_sampled_frame_and_one_form(self):
        eta = EtaMetric.minkowski(3)
        spec = vielbein_spec(
            3,
            "normal",
            jet_order=1,
            overrides=lambda s: normal_conformal_fields(s, eta),
        )
        table = normal_conformal_fields(spec, eta)
        for mu in range(3):
            self.assertEqual(table[("a", (mu,))], spec.random_series("a", (mu,)))
            for b in range(3):
                self.assertEqual(
                    table[("e", (b, mu))], spec.truncate(spec.polynomial("e", (b, mu)))
                )
        self.assertEqual(spec.series("a", (1,)), table[("a", (1,))])


def test_crosscheck_identity_passes_and_fails():
    eta = EtaMetric.minkowski(2)

    def make_spec(label):
        return vielbein_spec(2, label)

    def by_differences(spec):
        return gamma_by_differences(spec, "e", eta)

    def by_pipeline(spec):
        return component_values(spec, curvature_of(spec, eta).gamma)

    report = crosscheck_identity(
        "oracle.gamma",
        "anchor",
        by_differences,
        by_pipeline,
        make_spec,
        trials=2,
        seed=7,
    )
    assert report.passed
    assert report.seeds == ["7:oracle.gamma:0", "7:oracle.gamma:1"]

    def wrong(spec):
        return {key: value + 1 for key, value in by_pipeline(spec).items()}

    failed = crosscheck_identity(
        "oracle.gamma", "anchor", by_differences, wrong, make_spec, trials=1, seed=7
    )
    assert not failed.passed
    assert failed.residual_term_count == 8


def test_mismatched_sides_raise():
    with pytest.raises(OracleError):
        crosscheck_identity(
            "oracle.shape",
            "anchor",
            lambda spec: [1, 2],
            lambda spec: [1],
            lambda label: FieldSpec(1, label),
            trials=1,
        )
