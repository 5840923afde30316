"""
Trace-class perturbation theory for pairs of generator tuples.

For simultaneously diagonalizable tuples with real spectra in (-inf, 0]^n the
spectral shift is a signed atomic measure: +1 at every -lambda^(k) of A and
-1 at every -mu^(k) of B. In one dimension xi is its right-continuous
antiderivative and

    tr(T_A(v) - T_B(v)) = sum_k w_k exp(-v.t_k)
    log Delta_{B/A}(z)  = -sum_k w_k log(z + t_k)   (principal branch)
"""
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import pandas as pd

from app.core.bernstein import BernsteinFunction, evaluate, omega, widder_measure
from app.core.catalog import log_resolvent
from app.core.errors import (
    ArityMismatchError,
    BranchCutError,
    DimensionMismatchError,
    SpectrumError,
)
from app.core.operator_calculus import SAFETY, psi_of
from app.core.semigroups import (
    GeneratorTuple,
    NormKind,
    commute_with,
    difference_norms,
    pair_bound,
    real_spectrum,
    require_same_shape,
    resolvent,
    resolvent_product,
    semigroup_at,
)

logger = logging.getLogger(__name__)

MERGE_DECIMALS = 12


@dataclass(frozen=True)
class SpectralShift:
    """Signed integer atoms t_k in R_+^n with weights w_k."""

    points: np.ndarray  # (k, n)
    weights: np.ndarray  # (k,) int
    arity: int
    source: tuple | None = field(default=None, compare=False, repr=False)

    @classmethod
    def from_atoms(cls, points, weights, arity: int, source=None) -> "SpectralShift":
        merged: dict[tuple, list] = {}
        for point, weight in zip(np.asarray(points, dtype=float).reshape(-1, arity), weights):
            key = tuple(np.round(point, MERGE_DECIMALS) + 0.0)
            if key in merged:
                merged[key][1] += int(weight)
            else:
                merged[key] = [point, int(weight)]
        atoms = sorted((tuple(p), w) for p, w in merged.values() if w != 0)
        if not atoms:
            return cls(np.zeros((0, arity)), np.zeros(0, dtype=int), arity, source)
        return cls(np.array([p for p, _ in atoms]), np.array([w for _, w in atoms], dtype=int), arity, source)

    def __len__(self) -> int:
        return len(self.weights)

    def __neg__(self) -> "SpectralShift":
        return SpectralShift(self.points, -self.weights, self.arity)

    def __add__(self, other: "SpectralShift") -> "SpectralShift":
        if other.arity != self.arity:
            raise ArityMismatchError("Shifts of different arity cannot be added")
        return SpectralShift.from_atoms(np.vstack([self.points, other.points]),
                                        np.concatenate([self.weights, other.weights]), self.arity)

    @property
    def total_weight(self) -> int:
        return int(self.weights.sum())

    def laplace(self, v) -> float:
        """<eta, exp(-v.t)>."""
        v = np.asarray(v, dtype=float).reshape(-1)
        return float(self.weights @ np.exp(-self.points @ v))

    def stieltjes(self, lam) -> complex:
        """sum_k w_k prod_i 1 / (lam_i + t_{k,i})."""
        lam = np.asarray(lam).reshape(-1)
        return complex(np.sum(self.weights / np.prod(lam[None, :] + self.points, axis=1)))

    def to_dict(self) -> dict:
        return {"points": self.points.tolist(), "weights": self.weights.tolist()}


@dataclass(frozen=True)
class ShiftFunction:
    """xi(t) = sum_{t_k <= t} w_k for a one-dimensional atomic shift."""

    jumps: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_shift(cls, shift: SpectralShift) -> "ShiftFunction":
        if shift.arity != 1:
            raise ArityMismatchError("The shift function exists only for single generators")
        return cls(shift.points[:, 0], shift.weights)

    def __call__(self, t) -> np.ndarray | float:
        t = np.asarray(t, dtype=float)
        cumulative = np.concatenate([[0], np.cumsum(self.weights)])
        values = cumulative[np.searchsorted(self.jumps, t, side="right")].astype(float)
        return float(values) if values.ndim == 0 else values

    def distance_to_jump(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if not len(self.jumps):
            return np.full(t.shape, math.inf)
        return np.abs(t[:, None] - self.jumps[None, :]).min(axis=1)


def spectral_shift(a: GeneratorTuple, b: GeneratorTuple) -> SpectralShift:
    require_same_shape(a, b)
    lam, _ = real_spectrum(a)
    mu, _ = real_spectrum(b)
    points = np.vstack([-lam, -mu]) + 0.0
    weights = np.concatenate([np.ones(len(lam), dtype=int), -np.ones(len(mu), dtype=int)])
    return SpectralShift.from_atoms(points, weights, a.arity, source=(lam, mu))


def _trace(matrix: np.ndarray) -> complex | float:
    value = np.trace(matrix)
    return float(value.real) if abs(value.imag) <= 1e-14 * (1.0 + abs(value)) else complex(value)


def trace_semigroup_diff(a: GeneratorTuple, b: GeneratorTuple, v) -> dict:
    """tr(T_A(v) - T_B(v)) with the bound M^{n+1} sum_i v_i ||A_i - B_i||_1."""
    require_same_shape(a, b)
    v = np.asarray(v, dtype=float).reshape(-1)
    value = _trace(semigroup_at(a, v) - semigroup_at(b, v))
    bound = pair_bound(a, b) ** (a.arity + 1) * float(v @ difference_norms(a, b, NormKind.TRACE))
    return {"value": value, "bound": bound, "within_bound": bool(abs(value) <= bound * (1 + 1e-12) + 1e-14)}


def _linear_part(psi: BernsteinFunction, shift: SpectralShift) -> float:
    # tr(sum_j c_j (A_j - B_j)) = -sum_j c_j sum_k w_k t_{k,j}
    return -float(psi.linear @ (shift.weights @ shift.points)) if len(shift) else 0.0


def _laplace_side(psi: BernsteinFunction, shift: SpectralShift) -> float:
    """int <eta, exp(-u.t)> dmu(u) plus the linear term, over the node sum."""
    measure = psi.measure
    total = _linear_part(psi, shift)
    if len(shift) and len(measure.masses):
        total += float(measure.masses @ (np.exp(-measure.points @ shift.points.T) @ shift.weights))
    return total


def trace_formula_check(psi: BernsteinFunction, a: GeneratorTuple, b: GeneratorTuple) -> dict:
    """tr(psi(A) - psi(B)) against the Laplace transform of the shift integrated over mu."""
    if psi.arity != a.arity:
        raise ArityMismatchError(f"{psi} has arity {psi.arity}, tuples have {a.arity} generators")
    omega(psi)
    shift = spectral_shift(a, b)
    left = psi_of(psi, a)
    right = psi_of(psi, b)
    lhs = _trace(left.value - right.value)
    rhs = _laplace_side(psi, shift)
    lam, mu = shift.source
    oracle = float(np.sum(np.atleast_1d(evaluate(psi, lam))) - np.sum(np.atleast_1d(evaluate(psi, mu))))
    budget = SAFETY * a.dimension * (left.quadrature_budget + right.quadrature_budget)
    return {
        "lhs": lhs,
        "rhs": rhs,
        "residual": abs(lhs - rhs),
        "oracle_residual": abs(lhs - oracle),
        "budget": budget,
        "commuting": commute_with(a, b),
    }


def resolvent_trace_check(a: GeneratorTuple, b: GeneratorTuple, lam) -> dict:
    """tr(R(lam, A) - R(lam, B)) against sum_k w_k prod_i 1 / (lam_i + t_{k,i})."""
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    if lam.shape != (a.arity,):
        raise DimensionMismatchError(f"lam needs {a.arity} entries, got {lam.shape}")
    if np.any(lam.real <= 0.0):
        raise BranchCutError("Resolvent points need Re lam_i > 0")
    shift = spectral_shift(a, b)
    lhs = complex(np.trace(resolvent_product(a, lam) - resolvent_product(b, lam)))
    rhs = shift.stieltjes(lam)
    return {"lhs": lhs, "rhs": rhs, "residual": abs(lhs - rhs)}


def _shift_of_values(values_a: np.ndarray, values_b: np.ndarray) -> SpectralShift:
    points = np.concatenate([-values_a, -values_b])[:, None]
    weights = np.concatenate([np.ones(len(values_a), dtype=int), -np.ones(len(values_b), dtype=int)])
    return SpectralShift.from_atoms(points, weights, 1)


def subordinated_shift_check(psi: BernsteinFunction, a: GeneratorTuple, b: GeneratorTuple,
                             s_grid=(0.5, 1.0, 2.0)) -> dict:
    """Shift of (psi(A), psi(B)) versus the shift of (A, B) mixed by nu_s.

    <eta_{psi(A),psi(B)}, exp(-s t)> = int <eta_{A,B}, exp(-u.t)> dnu_s(u)
    """
    shift = spectral_shift(a, b)
    lam, mu = shift.source
    outer = _shift_of_values(np.atleast_1d(evaluate(psi, lam)), np.atleast_1d(evaluate(psi, mu)))
    rows = []
    budget = 0.0
    for s in s_grid:
        law = widder_measure(psi, s)
        lhs = outer.laplace([s])
        rhs = float(law.masses @ (np.exp(-law.points @ shift.points.T) @ shift.weights)) if len(shift) else 0.0
        step = SAFETY * 2 * a.dimension * (law.budget + s * psi.budget)
        budget = max(budget, step)
        rows.append({"s": float(s), "lhs": lhs, "rhs": rhs, "residual": abs(lhs - rhs), "budget": step})
    return {
        "residual": max((r["residual"] for r in rows), default=0.0),
        "budget": budget,
        "rows": rows,
    }


def _check_cut(z: complex) -> complex:
    z = complex(z)
    if z.imag == 0.0 and z.real <= 0.0:
        raise BranchCutError(f"z = {z} lies on the cut (-inf, 0]")
    return z


def _single(a: GeneratorTuple, b: GeneratorTuple) -> None:
    require_same_shape(a, b)
    if a.arity != 1:
        raise ArityMismatchError("Perturbation determinants are defined for single generators")


@dataclass(frozen=True)
class DeterminantHandle:
    """Delta_{B/A} of a pair of single generators with its three evaluation paths."""

    a: GeneratorTuple
    b: GeneratorTuple
    shift: SpectralShift

    @classmethod
    def of(cls, a: GeneratorTuple, b: GeneratorTuple) -> "DeterminantHandle":
        _single(a, b)
        return cls(a, b, spectral_shift(a, b))

    @property
    def xi(self) -> ShiftFunction:
        return ShiftFunction.from_shift(self.shift)

    def log(self, z) -> complex:
        """<xi, 1/(t + z)> = -sum_k w_k log(z + t_k), principal logs."""
        z = _check_cut(z)
        if not len(self.shift):
            return 0j
        return complex(-np.sum(self.shift.weights * np.log(z + self.shift.points[:, 0])))

    def __call__(self, z, path: str = "auto") -> complex:
        """auto: the trace definition for real z > 0, the Stieltjes continuation elsewhere."""
        if path == "auto":
            z = _check_cut(z)
            path = "trace" if z.imag == 0.0 else "stieltjes"
        if path == "stieltjes":
            return complex(np.exp(self.log(z)))
        if path == "determinant":
            return self.by_determinant(z)
        if path == "trace":
            return self.by_trace(z)
        raise ValueError(f"Unknown determinant path {path!r}")

    def by_determinant(self, z) -> complex:
        """det((zI - B)(zI - A)^{-1})."""
        z = _check_cut(z)
        eye = np.eye(self.a.dimension)
        return complex(np.linalg.det((z * eye - self.b[0]) @ resolvent(self.a, 0, z)))

    def by_trace(self, z) -> complex:
        """exp tr(psi_z(A) - psi_z(B)) with psi_z(s) = log z - log(z - s); real z > 0 only."""
        z = _check_cut(z)
        if z.imag != 0.0:
            raise BranchCutError("The trace path needs a real z > 0")
        psi = log_resolvent(z.real)
        return complex(np.exp(np.trace(psi_of(psi, self.a).value - psi_of(psi, self.b).value)))

    def log_derivative(self, z) -> complex:
        """Delta'/Delta(z) = -sum_k w_k / (z + t_k)."""
        z = _check_cut(z)
        if not len(self.shift):
            return 0j
        return complex(-np.sum(self.shift.weights / (z + self.shift.points[:, 0])))


def perturbation_determinant(a: GeneratorTuple, b: GeneratorTuple, z, path: str = "auto") -> complex:
    return DeterminantHandle.of(a, b)(z, path)


def _relative(x: complex, y: complex) -> float:
    return abs(x - y) / max(abs(y), 1e-300)


def determinant_identity_checks(a: GeneratorTuple, b: GeneratorTuple, c: GeneratorTuple, z_grid) -> dict:
    """Determinant formula, multiplicativity and the log-derivative identity on a z-grid."""
    ba, cb, ca = DeterminantHandle.of(a, b), DeterminantHandle.of(b, c), DeterminantHandle.of(a, c)
    rows = []
    for z in z_grid:
        z = _check_cut(z)
        step = 1e-5 * abs(z)
        resolvents = complex(np.trace(resolvent(b, 0, z) - resolvent(a, 0, z)))
        closed = ba.log_derivative(z)
        central = (ba.log(z + step) - ba.log(z - step)) / (2.0 * step)
        rows.append({
            "z_real": z.real,
            "z_imag": z.imag,
            "delta_real": ba(z, "stieltjes").real,
            "delta_imag": ba(z, "stieltjes").imag,
            "determinant_error": _relative(ba(z, "stieltjes"), ba.by_determinant(z)),
            "multiplicative_error": _relative(ba(z, "stieltjes") * cb(z, "stieltjes"), ca(z, "stieltjes")),
            "multiplicative_error_det": _relative(ba.by_determinant(z) * cb.by_determinant(z),
                                                  ca.by_determinant(z)),
            "log_derivative_error": abs(closed - resolvents),
            "central_difference_error": abs(central - resolvents),
        })
    frame = pd.DataFrame(rows)
    summary = {
        key: float(frame[key].max()) if len(frame) else 0.0
        for key in ("determinant_error", "multiplicative_error", "multiplicative_error_det",
                    "log_derivative_error", "central_difference_error")
    }
    summary["commuting"] = commute_with(a, b) and commute_with(b, c)
    return {"summary": summary, "frame": frame}


def _real_kernel(k: int, b: Fraction) -> Fraction:
    """Contribution of one unit jump to the order-k real inversion at b = t/(t + t_j)."""
    total = Fraction(0)
    for m in range(k + 1):
        p = 2 * k - 1 - m
        sign = -1 if (k + p - 1) % 2 else 1
        coefficient = Fraction(math.comb(2 * k - 1, m) * math.factorial(p - 1),
                               math.factorial(k - m) * math.factorial(k - 2))
        total += sign * coefficient * b**p
    return total


def _invert_real(shift: SpectralShift, t: float, k: int) -> float:
    if k < 2:
        raise ValueError(f"Real inversion needs order k >= 2, got {k}")
    t_exact = Fraction(t)
    total = Fraction(0)
    for jump, weight in zip(shift.points[:, 0], shift.weights):
        total += int(weight) * _real_kernel(k, t_exact / (t_exact + Fraction(float(jump))))
    return float(total)


def stieltjes_inversion(handle: DeterminantHandle, t_grid, method: str = "complex", y: float = 1e-3,
                        orders=(4, 8, 16), jump_tolerance: float = 1e-12) -> pd.DataFrame:
    """Recover xi from Delta_{B/A}.

    complex: xi(t) ~ Im log Delta(-t - iy) / pi
    real:    order-k real inversion of the Stieltjes transform, exact rational arithmetic
    Grid points on a jump are flagged and left unevaluated.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(t_grid <= 0.0):
        raise ValueError("Inversion points must be positive")
    xi = handle.xi
    exact = np.atleast_1d(xi(t_grid))
    at_jump = xi.distance_to_jump(t_grid) <= jump_tolerance
    rows = []
    if method == "complex":
        if y <= 0.0:
            raise ValueError(f"y must be positive, got {y}")
        for t, value, flagged in zip(t_grid, exact, at_jump):
            recovered = math.nan if flagged else handle.log(complex(-t, -y)).imag / math.pi
            rows.append({"t": t, "y": y, "xi": value, "xi_recovered": recovered,
                         "abs_error": abs(recovered - value), "at_jump": bool(flagged)})
    elif method == "real":
        for k in orders:
            for t, value, flagged in zip(t_grid, exact, at_jump):
                recovered = math.nan if flagged else _invert_real(handle.shift, float(t), int(k))
                rows.append({"t": t, "k": int(k), "xi": value, "xi_recovered": recovered,
                             "abs_error": abs(recovered - value), "at_jump": bool(flagged)})
    else:
        raise ValueError(f"Unknown inversion method {method!r}")
    return pd.DataFrame(rows)


def complex_inversion_envelope(shift: SpectralShift, t: float, y: float) -> float:
    """sum_k |w_k| y / (pi |t - t_k|): error bound of the complex method away from jumps."""
    distance = np.abs(t - shift.points[:, 0])
    return float(np.sum(np.abs(shift.weights) * y / (math.pi * distance)))


def krein_integral_check(psi: BernsteinFunction, a: GeneratorTuple, b: GeneratorTuple) -> dict:
    """tr(psi(A) - psi(B)) against int psi'(-t) xi(t) dt and the Laplace form of xi.

    int psi'(-t) xi(t) dt = sum_k w_k [psi(-t_k) - psi(-T)] and the psi(-T)
    terms cancel because the weights sum to zero.
    """
    _single(a, b)
    shift = spectral_shift(a, b)
    if shift.total_weight != 0:
        raise SpectrumError("Shift weights must sum to zero")
    omega(psi)
    left = psi_of(psi, a)
    right = psi_of(psi, b)
    lhs = _trace(left.value - right.value)
    if len(shift):
        integral = float(shift.weights @ np.atleast_1d(evaluate(psi, -shift.points)))
    else:
        integral = 0.0
    laplace = _laplace_side(psi, shift)
    budget = SAFETY * a.dimension * (left.quadrature_budget + right.quadrature_budget)
    return {
        "lhs": lhs,
        "integral": integral,
        "laplace": laplace,
        "residual": max(abs(lhs - integral), abs(lhs - laplace)),
        "budget": budget,
    }
