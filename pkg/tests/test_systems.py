"""Tests for LTV systems and feedback conjugates."""

import numpy as np
import pytest

from src.expr import evaluate
from src.systems import (
    BadDomain, EmptyCoefficients, VanishingForwardGain, VanishingLeadingCoefficient,
    feedback_conjugate, is_time_invariant, make_gains, make_system, negated,
    scalar_invariant_conjugate, scaled, validate_gains, validation_grid
)

from conftest import DOMAIN

BASES = [
    ["t", "1"],
    ["t + 1", "1"],
    ["1", "1 + t^2"],
    ["t + 1", "2 + sin(t)", "1"],
    ["1", "t + 1", "2 + sin(t)", "1"],
]

GAINS = [
    ("2", "3"),
    ("1 + 0.5*sin(t)", "1"),
    ("exp(0.2*t)", "0.5*t"),
    ("-1", "sin(t)"),
]


class TestMakeSystem:
    def test_first_order(self):
        system = make_system(["t", "1"], DOMAIN)
        assert system.order == 1
        assert system.domain == (0.0, 5.0)
        assert evaluate(system.coeffs[0], 2.0) == 2.0

    def test_vanishing_leading_coefficient(self):
        with pytest.raises(VanishingLeadingCoefficient) as info:
            make_system(["1", "t"], DOMAIN)
        assert info.value.t == 0.0

    def test_vanishing_inside_domain(self):
        with pytest.raises(VanishingLeadingCoefficient) as info:
            make_system(["1", "t - 2.5"], DOMAIN)
        assert info.value.t == pytest.approx(2.5)

    def test_scalar_system(self):
        system = make_system(["t + 1"], DOMAIN)
        assert system.order == 0

    def test_empty_coefficients(self):
        with pytest.raises(EmptyCoefficients):
            make_system([], DOMAIN)

    @pytest.mark.parametrize("domain", [(5.0, 0.0), (1.0, 1.0), ("a", "b")])
    def test_bad_domain(self, domain):
        with pytest.raises(BadDomain):
            make_system(["1"], domain)

    def test_numbers_accepted(self):
        system = make_system([2, 1.5], DOMAIN)
        np.testing.assert_array_equal(system.sample(np.array([0.0, 1.0])), [[2.0, 2.0], [1.5, 1.5]])

    def test_coefficient_strings(self, first_order):
        assert first_order.coefficient_strings() == {'a0': 't', 'a1': '1'}


class TestFeedbackConjugate:
    def test_constant_gains_printed_forms(self, first_order, constant_gains):
        conjugate = feedback_conjugate(first_order, constant_gains)
        assert conjugate.coefficient_strings('b') == {'b0': 't/2 + 3', 'b1': '1/2'}

    def test_identity_gains(self, first_order):
        conjugate = feedback_conjugate(first_order, make_gains("1", "0"))
        grid = validation_grid(DOMAIN)
        np.testing.assert_array_equal(conjugate.sample(grid), first_order.sample(grid))

    def test_scalar_invariant_case(self):
        base = make_system(["t + 1"], DOMAIN)
        conjugate = feedback_conjugate(base, make_gains("-(t + 1)", "4"))
        np.testing.assert_allclose(evaluate(conjugate.coeffs[0], validation_grid(DOMAIN)), 3.0)
        assert is_time_invariant(conjugate)

    def test_scalar_invariant_conjugate_helper(self):
        base = make_system(["t + 1"], DOMAIN)
        gains = scalar_invariant_conjugate(base, 4.0)
        conjugate = feedback_conjugate(base, gains)
        np.testing.assert_allclose(evaluate(conjugate.coeffs[0], validation_grid(DOMAIN)), 3.0)

    def test_scalar_invariant_conjugate_needs_order_zero(self, first_order):
        with pytest.raises(ValueError):
            scalar_invariant_conjugate(first_order, 1.0)

    @pytest.mark.parametrize("coeffs", BASES)
    @pytest.mark.parametrize("alpha, beta", GAINS)
    def test_coefficient_relations(self, coeffs, alpha, beta):
        base = make_system(coeffs, DOMAIN)
        gains = make_gains(alpha, beta)
        conjugate = feedback_conjugate(base, gains)
        assert conjugate.order == base.order

        grid = validation_grid(DOMAIN)
        a = base.sample(grid)
        b = conjugate.sample(grid)
        alpha_values = evaluate(gains.alpha, grid)
        beta_values = evaluate(gains.beta, grid)

        np.testing.assert_allclose(b[1:] * alpha_values, a[1:], rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose((b[0] - beta_values) * alpha_values, a[0], rtol=1e-12, atol=1e-12)

    def test_second_conjugate_rescales(self, first_order):
        once = feedback_conjugate(first_order, make_gains("1 + 0.5*sin(t)", "t"))
        twice = feedback_conjugate(once, make_gains("1/2", "0"))
        grid = validation_grid(DOMAIN)
        np.testing.assert_allclose(twice.sample(grid), 2.0 * once.sample(grid), rtol=1e-12)

    def test_vanishing_forward_gain(self, first_order):
        with pytest.raises(VanishingForwardGain) as info:
            feedback_conjugate(first_order, make_gains("t - 1", "0"))
        assert info.value.t == pytest.approx(1.0)

    def test_validate_gains_passes_through(self, constant_gains):
        assert validate_gains(constant_gains, DOMAIN) is constant_gains


class TestHelpers:
    def test_time_invariance(self, first_order):
        assert not is_time_invariant(first_order)
        assert is_time_invariant(make_system(["2", "1"], DOMAIN))

    def test_scaled(self, first_order):
        grid = validation_grid(DOMAIN)
        np.testing.assert_allclose(scaled(first_order, 3.0).sample(grid), 3.0 * first_order.sample(grid))

    def test_negated(self, first_order):
        grid = validation_grid(DOMAIN)
        np.testing.assert_array_equal(negated(first_order).sample(grid), -first_order.sample(grid))

    def test_to_dict(self, first_order):
        assert first_order.to_dict() == {
            'name': 'A', 'order': 1, 'coeffs': ['t', '1'], 'domain': [0.0, 5.0]
        }
