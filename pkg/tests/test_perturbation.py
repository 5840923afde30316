"""Tests for spectral shifts, trace formulas, perturbation determinants and inversion."""
import math
from fractions import Fraction

import numpy as np
import pytest

from app.core.catalog import combine, dirac, log_resolvent
from app.core.errors import (
    ArityMismatchError,
    BranchCutError,
    MomentInfiniteError,
    SpectrumError,
)
from app.core.perturbation import (
    DeterminantHandle,
    ShiftFunction,
    _real_kernel,
    complex_inversion_envelope,
    determinant_identity_checks,
    krein_integral_check,
    perturbation_determinant,
    resolvent_trace_check,
    spectral_shift,
    stieltjes_inversion,
    subordinated_shift_check,
    trace_formula_check,
    trace_semigroup_diff,
)
from app.core.semigroups import GeneratorTuple, planted_tuple
from app.services.suites import random_pair


@pytest.fixture
def handle(diag_pair):
    return DeterminantHandle.of(*diag_pair)


@pytest.fixture
def planted_pair(shared_basis):
    """Two-generator pair sharing three joint eigenvalues."""
    lam = np.array([[-1.0, -2.0], [-3.0, -1.0], [-0.5, -0.5], [-2.0, -2.0]])
    mu = lam.copy()
    mu[1] = [-4.0, -1.0]
    return planted_tuple(lam, shared_basis, label="A"), planted_tuple(mu, shared_basis, label="B")


@pytest.mark.unit
class TestSpectralShift:
    def test_atoms_of_a_diagonal_pair(self, diag_pair):
        shift = spectral_shift(*diag_pair)
        np.testing.assert_allclose(shift.points[:, 0], [1.0, 1.5, 2.0, 2.5])
        np.testing.assert_array_equal(shift.weights, [1, -1, 1, -1])
        assert shift.total_weight == 0

    def test_shared_atoms_cancel(self, planted_pair):
        shift = spectral_shift(*planted_pair)
        np.testing.assert_allclose(shift.points, [[3.0, 1.0], [4.0, 1.0]])
        np.testing.assert_array_equal(shift.weights, [1, -1])

    def test_antisymmetry(self, diag_pair):
        a, b = diag_pair
        forward, backward = spectral_shift(a, b), spectral_shift(b, a)
        np.testing.assert_allclose(backward.points, forward.points)
        np.testing.assert_array_equal(backward.weights, (-forward).weights)

    def test_chain_rule(self, diag_pair, third_diag):
        """eta_{A,B} + eta_{B,C} = eta_{A,C}."""
        a, b = diag_pair
        chained = spectral_shift(a, b) + spectral_shift(b, third_diag)
        direct = spectral_shift(a, third_diag)
        np.testing.assert_allclose(chained.points, direct.points)
        np.testing.assert_array_equal(chained.weights, direct.weights)

    def test_complex_spectrum_rejected(self, diag_pair):
        rotation = GeneratorTuple(np.array([[-1.0, -1.0], [1.0, -1.0]]))
        with pytest.raises(SpectrumError):
            spectral_shift(diag_pair[0], rotation)

    def test_arity_checked_on_addition(self, diag_pair, planted_pair):
        with pytest.raises(ArityMismatchError):
            spectral_shift(*diag_pair) + spectral_shift(*planted_pair)

    def test_empty_shift(self, diag_pair):
        a, _ = diag_pair
        shift = spectral_shift(a, a)
        assert len(shift) == 0
        assert shift.laplace([1.0]) == 0.0


@pytest.mark.unit
class TestTraceFormulas:
    def test_semigroup_trace_difference(self, diag_pair):
        a, b = diag_pair
        result = trace_semigroup_diff(a, b, [1.0])
        expected = math.exp(-1.0) + math.exp(-2.0) - math.exp(-1.5) - math.exp(-2.5)
        assert result["value"] == pytest.approx(expected, rel=1e-12)
        assert result["value"] == pytest.approx(spectral_shift(a, b).laplace([1.0]), rel=1e-12)
        assert result["within_bound"]

    def test_dirac_trace_formula(self, jump, diag_pair):
        result = trace_formula_check(jump, *diag_pair)
        assert result["residual"] <= 1e-12
        assert result["oracle_residual"] <= 1e-12
        assert result["commuting"]

    def test_log_resolvent_trace_formula(self, resolvent1, diag_pair):
        result = trace_formula_check(resolvent1, *diag_pair)
        assert result["residual"] <= 1e-10
        assert result["oracle_residual"] <= result["budget"]

    def test_two_generators(self, planted_pair):
        result = trace_formula_check(dirac([1.0, 0.5]), *planted_pair)
        assert result["residual"] <= 1e-10

    def test_needs_a_first_moment(self, half, diag_pair):
        with pytest.raises(MomentInfiniteError):
            trace_formula_check(half, *diag_pair)

    def test_resolvent_trace(self, diag_pair):
        result = resolvent_trace_check(*diag_pair, [1.0])
        expected = 0.5 + 1.0 / 3.0 - 1.0 / 2.5 - 1.0 / 3.5
        assert result["lhs"] == pytest.approx(expected, rel=1e-12)
        assert result["residual"] <= 1e-12

    def test_resolvent_trace_two_generators(self, planted_pair):
        """1 / (4 * 3) - 1 / (5 * 3)."""
        result = resolvent_trace_check(*planted_pair, [1.0, 2.0])
        assert result["rhs"] == pytest.approx(1.0 / 60.0, rel=1e-12)
        assert result["residual"] <= 1e-12

    def test_resolvent_point_must_be_to_the_right(self, diag_pair):
        with pytest.raises(BranchCutError, match="Re lam"):
            resolvent_trace_check(*diag_pair, [-0.5])

    @pytest.mark.parametrize("fixture", ["jump", "half"])
    def test_subordinated_shift(self, fixture, diag_pair, request):
        psi = request.getfixturevalue(fixture)
        result = subordinated_shift_check(psi, *diag_pair)
        assert result["residual"] <= result["budget"]
        assert len(result["rows"]) == 3


@pytest.mark.unit
class TestDeterminant:
    def test_closed_form(self, handle):
        """Delta(z) = (z + 1.5)(z + 2.5) / ((z + 1)(z + 2))."""
        assert handle(1.0, "stieltjes") == pytest.approx(2.5 * 3.5 / 6.0, rel=1e-13)
        assert handle(1.0) == pytest.approx(2.5 * 3.5 / 6.0, rel=1e-5)

    def test_three_paths_agree(self, handle):
        z = 1.0
        assert handle(z, "determinant") == pytest.approx(handle(z, "stieltjes"), rel=1e-12)
        assert handle(z, "trace") == pytest.approx(handle(z, "stieltjes"), rel=1e-5)

    def test_default_path(self, handle):
        """Trace definition on the positive axis, continuation off it."""
        assert handle(2.0) == handle.by_trace(2.0)
        z = 1.0 + 1.0j
        assert handle(z) == handle(z, "stieltjes")

    def test_off_axis_point(self, diag_pair):
        z = 0.3 + 2.0j
        expected = (z + 1.5) * (z + 2.5) / ((z + 1.0) * (z + 2.0))
        assert perturbation_determinant(*diag_pair, z) == pytest.approx(expected, rel=1e-12)

    def test_cut_rejected(self, handle):
        with pytest.raises(BranchCutError):
            handle(-1.0)
        with pytest.raises(BranchCutError):
            handle.by_trace(1.0 + 1.0j)

    def test_single_generators_only(self, planted_pair):
        with pytest.raises(ArityMismatchError):
            DeterminantHandle.of(*planted_pair)

    def test_identity_suite(self, diag_pair, third_diag):
        result = determinant_identity_checks(*diag_pair, third_diag, [1.0, 2.0 + 1.0j, 0.5j, 4.0])
        summary = result["summary"]
        assert summary["determinant_error"] <= 1e-12
        assert summary["multiplicative_error"] <= 1e-12
        assert summary["multiplicative_error_det"] <= 1e-12
        assert summary["log_derivative_error"] <= 1e-12
        assert summary["central_difference_error"] <= 1e-6
        assert summary["commuting"]
        assert len(result["frame"]) == 4


@pytest.mark.unit
class TestShiftFunction:
    def test_right_continuous_steps(self, handle):
        xi = handle.xi
        np.testing.assert_array_equal(xi([0.5, 1.0, 1.2, 1.5, 1.75, 2.2, 3.0]), [0, 1, 1, 0, 0, 1, 0])
        assert xi(2.0) == 1.0

    def test_needs_a_single_generator(self, planted_pair):
        with pytest.raises(ArityMismatchError):
            ShiftFunction.from_shift(spectral_shift(*planted_pair))

    def test_distance_to_jump(self, handle):
        np.testing.assert_allclose(handle.xi.distance_to_jump([1.2, 3.0]), [0.2, 0.5])


@pytest.mark.unit
class TestInversion:
    def test_complex_method_within_envelope(self, handle):
        t_grid = [0.5, 1.2, 1.75, 2.2, 3.0]
        frame = stieltjes_inversion(handle, t_grid, method="complex", y=1e-3)
        for row in frame.itertuples():
            envelope = complex_inversion_envelope(handle.shift, row.t, row.y)
            assert row.abs_error <= envelope + 1e-14
        assert frame["abs_error"].max() <= 5e-3

    def test_jumps_are_flagged(self, handle):
        frame = stieltjes_inversion(handle, [1.0, 1.2], method="complex")
        assert frame["at_jump"].tolist() == [True, False]
        assert math.isnan(frame["xi_recovered"].iloc[0])

    def test_second_order_kernel(self):
        """For k = 2 a unit jump contributes 1 - (1 - b)^3."""
        for b in (Fraction(1, 2), Fraction(1, 5), Fraction(9, 10)):
            assert _real_kernel(2, b) == 1 - (1 - b) ** 3

    def test_real_method_improves_with_order(self, handle):
        frame = stieltjes_inversion(handle, [1.2], method="real", orders=(4, 8, 16))
        errors = frame.sort_values("k")["abs_error"].tolist()
        assert errors[0] > errors[1] > errors[2]
        assert errors[2] == pytest.approx(0.490705, abs=1e-5)

    def test_real_method_needs_order_two(self, handle):
        with pytest.raises(ValueError, match="k >= 2"):
            stieltjes_inversion(handle, [1.2], method="real", orders=(1,))

    def test_nonpositive_points_rejected(self, handle):
        with pytest.raises(ValueError, match="positive"):
            stieltjes_inversion(handle, [0.0])


@pytest.mark.unit
class TestKreinIntegral:
    def test_dirac(self, jump, diag_pair):
        result = krein_integral_check(jump, *diag_pair)
        expected = math.expm1(-1.0) + math.expm1(-2.0) - math.expm1(-1.5) - math.expm1(-2.5)
        assert result["lhs"] == pytest.approx(expected, rel=1e-12)
        assert result["residual"] <= 1e-12

    def test_log_resolvent(self, resolvent1, diag_pair):
        result = krein_integral_check(resolvent1, *diag_pair)
        assert result["residual"] <= 1e-10
        assert result["lhs"] == pytest.approx(math.log(2.5 * 3.5 / 6.0), abs=1e-6)

    def test_needs_a_first_moment(self, half, diag_pair):
        with pytest.raises(MomentInfiniteError):
            krein_integral_check(half, *diag_pair)


RESOLVENT_POINTS = np.geomspace(0.1, 100.0, 10)


@pytest.mark.integration
class TestSeededPairs:
    """Trace formulas over seeded pairs A, B = A - delta U with arities 1 to 3."""

    @pytest.mark.parametrize("kind", ["atomic", "density"])
    def test_trace_formula(self, kind):
        for seed in range(30):
            n = 1 + seed % 3
            a, b = random_pair(seed, n, 4)
            if kind == "atomic":
                psi = dirac([1.0, 0.5, 2.0][:n])
            else:
                psi = combine(*(log_resolvent(1.0 + j, coordinate=j, arity=n) for j in range(n)))
            result = trace_formula_check(psi, a, b)
            assert result["residual"] <= 1e-9, seed
            assert result["commuting"]

    def test_resolvent_trace_over_ten_points(self):
        for seed in range(30):
            n = 1 + seed % 3
            a, b = random_pair(seed, n, 4)
            for point in RESOLVENT_POINTS:
                lam = point * np.linspace(1.0, 2.0, n)
                assert resolvent_trace_check(a, b, lam)["residual"] <= 1e-9, (seed, point)
