"""Tests for the operator-norm and ideal-norm bounds and the randomized suites."""
import math

import numpy as np
import pytest

from app.core.bounds import (
    THEOREM1_CONSTANT,
    BoundReport,
    theorem1_check,
    theorem1_rhs,
    theorem1_scaling_check,
    theorem2_check,
)
from app.core.catalog import CATALOG, dirac, frac_power, log_resolvent
from app.core.errors import DimensionMismatchError, MomentInfiniteError
from app.services.suites import EIGEN_RANGE, random_pair, random_tuple, run_bound_suite


@pytest.mark.unit
class TestOperatorNormBound:
    def test_rhs_for_dirac(self, jump):
        """-(2e/(e-1)) psi(-1/4) for a gap of 1/2."""
        expected = THEOREM1_CONSTANT * -math.expm1(-0.25)
        assert theorem1_rhs(jump, np.array([0.5]), 1.0) == pytest.approx(expected, rel=1e-12)

    def test_diagonal_pair(self, jump, diag_pair):
        report = theorem1_check(jump, *diag_pair, pair_id="diag")
        assert report.lhs == pytest.approx(math.exp(-1.0) - math.exp(-1.5), rel=1e-12)
        assert report.passed
        assert report.to_dict()["pair_id"] == "diag"

    def test_square_root_needs_no_moments(self, half, diag_pair):
        report = theorem1_check(half, *diag_pair)
        assert report.rhs == pytest.approx(THEOREM1_CONSTANT * 0.5, abs=1e-6)
        assert report.passed

    def test_rhs_grows_with_the_gap(self, half, diag_pair):
        result = theorem1_scaling_check(half, *diag_pair, factors=(1.0, 0.25, 0.5))
        assert result["factors"] == [0.25, 0.5, 1.0]
        assert result["monotone"]
        assert result["rhs"][0] < result["rhs"][-1]

    def test_shape_mismatch(self, jump, diag_pair, rotated_tuple):
        with pytest.raises(DimensionMismatchError):
            theorem1_scaling_check(jump, diag_pair[0], rotated_tuple)


@pytest.mark.unit
class TestIdealNormBound:
    def test_trace_norm(self, jump, diag_pair):
        report = theorem2_check(jump, *diag_pair)
        expected = math.exp(-1.0) - math.exp(-1.5) + math.exp(-2.0) - math.exp(-2.5)
        assert report.lhs == pytest.approx(expected, rel=1e-12)
        assert report.rhs == pytest.approx(1.0, rel=1e-12)
        assert report.norm_kind == "trace"
        assert report.passed

    def test_operator_norm(self, resolvent1, diag_pair):
        report = theorem2_check(resolvent1, *diag_pair, kind="operator")
        assert report.rhs == pytest.approx(0.5, abs=1e-6)
        assert report.passed

    def test_needs_first_moments(self, half, diag_pair):
        with pytest.raises(MomentInfiniteError):
            theorem2_check(half, *diag_pair)

    def test_margin_and_budget(self):
        report = BoundReport("x", lhs=1.0, rhs=0.9, norm_kind="trace", budget=0.2)
        assert report.margin == pytest.approx(-0.1)
        assert report.passed
        assert not BoundReport("x", 1.0, 0.9, "trace").passed


@pytest.mark.unit
class TestRandomPairs:
    def test_seeded_pairs_repeat(self):
        first, second = random_pair(42, 2, 3), random_pair(42, 2, 3)
        for x, y in zip(first, second):
            np.testing.assert_array_equal(x.matrices, y.matrices)

    def test_b_is_a_pushed_left(self):
        a, b = random_pair(5, 1, 4)
        gap = a.spectrum.eigenvalues - b.spectrum.eigenvalues
        assert np.all(gap >= 0.0)
        assert gap.max() <= 1.0
        assert a.diagnostic.passed and b.diagnostic.passed

    def test_random_tuple_eigenvalues_in_range(self):
        generators = random_tuple(9, 2, 5)
        eigenvalues = generators.spectrum.eigenvalues
        assert eigenvalues.shape == (5, 2)
        assert np.all((eigenvalues >= EIGEN_RANGE[0]) & (eigenvalues <= EIGEN_RANGE[1]))

    def test_general_basis_is_well_conditioned(self):
        generators = random_tuple(3, 1, 4, basis_kind="general")
        assert np.linalg.cond(generators.spectrum.basis) <= 9.0 + 1e-9

    def test_unknown_basis_kind(self):
        with pytest.raises(ValueError, match="basis kind"):
            random_tuple(0, 1, 2, basis_kind="sparse")

    def test_tuple_generators_registered(self):
        for name in ("planted", "random_tuple", "random_pair"):
            assert CATALOG[name].kind == "tuple"


@pytest.mark.integration
class TestBoundSuites:
    """No violations of either bound over seeded normal pairs."""

    @pytest.mark.parametrize("psi", [dirac([1.0]), frac_power(0.5), log_resolvent(2.0)], ids=str)
    def test_operator_norm_suite(self, psi):
        frame = run_bound_suite(psi, theorem=1, count=20, seed=100)
        assert frame["pass"].all()
        assert frame["seed"].tolist() == list(range(100, 120))

    @pytest.mark.parametrize("kind", ["trace", "operator"])
    def test_ideal_norm_suite(self, kind):
        frame = run_bound_suite(log_resolvent(1.0), theorem=2, count=20, seed=7, kind=kind)
        assert frame["pass"].all()
        assert (frame["margin"] >= 0.0).all()

    def test_two_generator_suite(self):
        frame = run_bound_suite(dirac([1.0, 0.5]), theorem=1, count=10, seed=1, d=3)
        assert frame["pass"].all()

    def test_unknown_theorem(self, jump):
        with pytest.raises(ValueError, match="Unknown bound theorem"):
            run_bound_suite(jump, theorem=3, count=1)
