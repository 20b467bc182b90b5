"""Unit tests for the finite-difference gradient oracle."""

import numpy as np
import pytest

from lvat_lab.autodiff import tensor as T
from lvat_lab.autodiff.gradcheck import (
    GradCheckCase,
    check_case,
    default_cases,
    numerical_gradient,
    relative_error,
    run_gradcheck,
)
from lvat_lab.autodiff.tensor import Tensor, primitive


def _corrupted_square(a):
    """square() whose backward pass is off by a factor of two."""
    a = T.as_tensor(a)
    return primitive("bad_square", (a,), a.values**2, lambda g: (g * 4.0 * a.values,))


class TestRelativeError:
    """Test the error measure."""

    def test_small_values_use_absolute_error(self):
        """Below magnitude 1 the error is absolute."""
        assert relative_error(np.array([0.1]), np.array([0.0]))[0] == pytest.approx(0.1)

    def test_large_values_use_relative_error(self):
        """Above magnitude 1 the error is relative."""
        assert relative_error(np.array([110.0]), np.array([100.0]))[0] == pytest.approx(0.1)


class TestNumericalGradient:
    """Test central differences."""

    def test_quadratic(self):
        """Central differences of sum(x^2) give 2x."""
        x = np.array([1.0, -2.0, 0.5])
        grad = numerical_gradient(lambda t: T.reduce_sum(T.square(t["x"])), {"x": x}, "x")
        np.testing.assert_allclose(grad, 2.0 * x, atol=1e-8)

    def test_inputs_are_not_modified(self):
        """The caller's arrays are left untouched."""
        x = np.array([1.0, 2.0])
        numerical_gradient(lambda t: T.reduce_sum(t["x"]), {"x": x}, "x")
        assert x.tolist() == [1.0, 2.0]


class TestCheckCase:
    """Test pass/fail decisions."""

    def test_correct_gradient_passes(self):
        """A correct VJP passes."""
        case = GradCheckCase(
            "square", lambda t: T.reduce_sum(T.square(t["a"])), {"a": np.array([0.3, -1.2])}
        )
        result = check_case(case)
        assert result.passed
        assert result.n_values == 2

    def test_corrupted_gradient_fails(self):
        """A VJP that is off by a factor fails with a large error."""
        case = GradCheckCase(
            "bad", lambda t: T.reduce_sum(_corrupted_square(t["a"])), {"a": np.array([1.0, 2.0])}
        )
        result = check_case(case)
        assert not result.passed
        assert result.max_rel_error > 0.5

    def test_constant_graph_has_zero_gradient(self):
        """A graph independent of its inputs checks against zeros."""
        case = GradCheckCase("constant", lambda t: Tensor(1.0), {"a": np.ones(3)})
        assert check_case(case).passed


class TestRegistry:
    """Test the default registry of checked graphs."""

    def test_registry_size(self):
        """At least twelve named cases are registered."""
        names = [c.name for c in default_cases()]
        assert len(names) >= 12
        assert len(set(names)) == len(names)

    def test_registry_covers_regularizer_graphs(self):
        """VAT and both LVAT graphs are part of the registry."""
        names = {c.name for c in default_cases()}
        assert {"vat_cost_params", "vat_direction"} <= names
        assert {"lvat_vae_direction", "lvat_flow_direction"} <= names
        assert {"vae_elbo_gaussian", "flow_log_likelihood", "cross_entropy"} <= names

    def test_every_registered_case_passes(self):
        """Every analytic gradient matches central differences within 1e-5."""
        results = run_gradcheck()
        failed = [(r.name, r.max_rel_error) for r in results if not r.passed]
        assert failed == []
