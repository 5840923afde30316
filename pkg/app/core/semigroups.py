"""
Tuples of commuting matrix generators and the semigroups they generate.

T_A(u) = exp(u_1 A_1) ... exp(u_n A_n) for u in R_+^n. Matrix exponentials use
scipy's scaling-and-squaring Pade routine, batched over stacks of points.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np
import scipy.linalg

from app.core.config import settings
from app.core.errors import (
    DimensionMismatchError,
    InvalidTupleError,
    NotDiagonalizableError,
    SingularResolventError,
    SpectrumError,
)
from app.core.quadrature import gauss_legendre

logger = logging.getLogger(__name__)

BOUND_GRID = 2.0 ** np.arange(-10, 11)


class NormKind(str, Enum):
    OPERATOR = "operator"
    TRACE = "trace"


def norm(matrix, kind: NormKind | str = NormKind.OPERATOR) -> float:
    """Spectral norm or trace (nuclear) norm."""
    kind = NormKind(kind)
    matrix = np.asarray(matrix)
    if kind is NormKind.OPERATOR:
        return float(np.linalg.norm(matrix, 2))
    return float(np.linalg.norm(matrix, "nuc"))


@dataclass(frozen=True)
class JointSpectrum:
    """Joint eigenvalue tuples (row k = lambda^(k)) in a common basis P."""

    eigenvalues: np.ndarray  # (d, n)
    basis: np.ndarray  # (d, d), columns are joint eigenvectors
    leakage: float = 0.0

    def reconstruct(self) -> np.ndarray:
        inverse = np.linalg.inv(self.basis)
        return np.stack([self.basis @ np.diag(self.eigenvalues[:, j]) @ inverse
                         for j in range(self.eigenvalues.shape[1])])

    @property
    def is_real(self) -> bool:
        scale = 1.0 + np.abs(self.eigenvalues).max(initial=0.0)
        return bool(np.abs(self.eigenvalues.imag).max(initial=0.0) <= 1e-10 * scale)


@dataclass
class TupleDiagnostic:
    arity: int
    dimension: int
    bound: float
    abscissas: list[float]
    commutators: list[dict]
    checks: dict[str, bool] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        return {
            "arity": self.arity,
            "dimension": self.dimension,
            "bound": self.bound,
            "abscissas": self.abscissas,
            "commutators": self.commutators,
            "checks": self.checks,
            "passed": self.passed,
        }


def _as_stack(matrices) -> np.ndarray:
    stack = np.asarray(matrices)
    if stack.ndim == 2:
        stack = stack[None]
    if stack.ndim != 3 or stack.shape[1] != stack.shape[2]:
        raise DimensionMismatchError(f"Expected n square matrices of equal size, got shape {stack.shape}")
    if np.iscomplexobj(stack) and not np.any(stack.imag):
        stack = stack.real
    stack = np.array(stack, dtype=complex if np.iscomplexobj(stack) else float)
    if not np.all(np.isfinite(stack)):
        raise ValueError("Generator matrices must have finite entries")
    stack.setflags(write=False)
    return stack


@dataclass(frozen=True, eq=False)
class GeneratorTuple:
    """n commuting d x d generators A_1 ... A_n.

    Derived quantities (bound estimate, diagnostic) are computed on first use
    and cached; the tuple itself never changes.
    """

    matrices: np.ndarray
    commute_tolerance: float = settings.COMMUTE_TOLERANCE
    growth_exponents: tuple[int, ...] = ()
    spectrum: JointSpectrum | None = None
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "matrices", _as_stack(self.matrices))
        if not self.growth_exponents:
            object.__setattr__(self, "growth_exponents", (0,) * self.arity)
        if len(self.growth_exponents) != self.arity:
            raise DimensionMismatchError("growth_exponents needs one entry per generator")

    @property
    def arity(self) -> int:
        return self.matrices.shape[0]

    @property
    def dimension(self) -> int:
        return self.matrices.shape[1]

    def __getitem__(self, i: int) -> np.ndarray:
        return self.matrices[i]

    def __len__(self) -> int:
        return self.arity

    @cached_property
    def bound(self) -> float:
        """Estimate of M_A = sup_t ||exp(t A_j)|| over a log-spaced grid.

        An estimate, not a certificate; for normal generators it is exactly 1.
        """
        best = 1.0
        for matrix in self.matrices:
            flows = scipy.linalg.expm(BOUND_GRID[:, None, None] * matrix[None])
            finite = np.all(np.isfinite(flows), axis=(1, 2))
            if not np.all(finite):
                return float("inf")
            best = max(best, float(np.linalg.norm(flows, 2, axis=(1, 2)).max()))
        return best

    @cached_property
    def diagnostic(self) -> TupleDiagnostic:
        return validate(self)

    def require_valid(self) -> "GeneratorTuple":
        if not self.diagnostic.passed:
            failed = [name for name, ok in self.diagnostic.checks.items() if not ok]
            raise InvalidTupleError(f"Generator tuple {self.label or ''} fails {', '.join(failed)}")
        return self

    def replace(self, i: int, matrix) -> "GeneratorTuple":
        stack = np.array(self.matrices, dtype=np.result_type(self.matrices, np.asarray(matrix)))
        stack[i] = matrix
        return GeneratorTuple(stack, self.commute_tolerance, self.growth_exponents, label=self.label)

    def extend(self, matrix) -> "GeneratorTuple":
        stack = np.concatenate([self.matrices, _as_stack(matrix)])
        return GeneratorTuple(stack, self.commute_tolerance, self.growth_exponents + (0,), label=self.label)

    def shifted(self, shift: float) -> "GeneratorTuple":
        """A_j - shift I for every j."""
        eye = np.eye(self.dimension)
        spectrum = None
        if self.spectrum is not None:
            spectrum = JointSpectrum(self.spectrum.eigenvalues - shift, self.spectrum.basis)
        return GeneratorTuple(self.matrices - shift * eye, self.commute_tolerance,
                              self.growth_exponents, spectrum, self.label)

    def perturbed(self, directions, h: float) -> "GeneratorTuple":
        """A + h C, keeping the planted basis when C is diagonal in it."""
        directions = _as_stack(directions)
        spectrum = None
        if self.spectrum is not None and directions.shape == self.matrices.shape:
            inverse = np.linalg.inv(self.spectrum.basis)
            local = np.stack([inverse @ c @ self.spectrum.basis for c in directions])
            diagonal = np.diagonal(local, axis1=1, axis2=2)
            off = local - np.stack([np.diag(row) for row in diagonal])
            if np.abs(off).max(initial=0.0) <= self.commute_tolerance * (1.0 + np.abs(local).max(initial=0.0)):
                spectrum = JointSpectrum(self.spectrum.eigenvalues + h * diagonal.T, self.spectrum.basis)
        return GeneratorTuple(self.matrices + h * directions, self.commute_tolerance,
                              self.growth_exponents, spectrum, self.label)


def validate(generators: GeneratorTuple, max_bound: float | None = None) -> TupleDiagnostic:
    """Commutators, M_A estimate, spectral abscissas and reconstruction check."""
    max_bound = settings.MAX_BOUND if max_bound is None else max_bound
    mats = generators.matrices
    frob = [float(np.linalg.norm(m)) for m in mats]
    commutators = []
    for i in range(generators.arity):
        for j in range(i + 1, generators.arity):
            value = float(np.linalg.norm(mats[i] @ mats[j] - mats[j] @ mats[i]))
            limit = generators.commute_tolerance * (1.0 + frob[i] * frob[j])
            commutators.append({"i": i, "j": j, "norm": value, "limit": limit, "ok": value <= limit})

    abscissas = [float(np.linalg.eigvals(m).real.max()) for m in mats]
    bound = generators.bound
    checks = {
        "commute": all(c["ok"] for c in commutators),
        "bounded": bool(np.isfinite(bound) and bound <= max_bound),
        "abscissa": all(a <= generators.commute_tolerance * (1.0 + f) for a, f in zip(abscissas, frob)),
    }
    if generators.spectrum is not None:
        rebuilt = generators.spectrum.reconstruct()
        error = np.linalg.norm(rebuilt - mats) / max(np.linalg.norm(mats), 1e-300)
        checks["spectrum"] = bool(error <= 1e-10)

    report = TupleDiagnostic(generators.arity, generators.dimension, bound, abscissas, commutators, checks)
    if not report.passed:
        logger.warning("Generator tuple %s failed validation: %s", generators.label, checks)
    return report


def semigroup_batch(generators: GeneratorTuple, points) -> np.ndarray:
    """T_A(u) for every row u of ``points``; returns a (k, d, d) stack."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != generators.arity:
        raise DimensionMismatchError(
            f"Points have {points.shape[1]} coordinates, tuple arity is {generators.arity}"
        )
    if np.any(points < 0.0):
        raise ValueError("Semigroup parameters must be nonnegative")
    d = generators.dimension
    result = np.broadcast_to(np.eye(d, dtype=generators.matrices.dtype), (points.shape[0], d, d)).copy()
    for j, matrix in enumerate(generators.matrices):
        u = points[:, j]
        if not np.any(u):
            continue
        result = result @ scipy.linalg.expm(u[:, None, None] * matrix[None])
    return result


def semigroup_at(generators: GeneratorTuple, u) -> np.ndarray:
    return semigroup_batch(generators, np.asarray(u, dtype=float).reshape(1, -1))[0]


def resolvent(generators: GeneratorTuple, i: int, lam: complex) -> np.ndarray:
    """R(lam, A_i) = (lam I - A_i)^{-1}."""
    d = generators.dimension
    shifted = lam * np.eye(d) - generators.matrices[i]
    if np.linalg.cond(shifted) > 1e14:
        raise SingularResolventError(f"lam = {lam} lies in the spectrum of A_{i}")
    try:
        return scipy.linalg.solve(shifted, np.eye(d))
    except np.linalg.LinAlgError as exc:
        raise SingularResolventError(f"lam = {lam} lies in the spectrum of A_{i}") from exc


def resolvent_product(generators: GeneratorTuple, lam) -> np.ndarray:
    """R(lam, A) = R(lam_1, A_1) ... R(lam_n, A_n)."""
    lam = np.atleast_1d(lam)
    product = np.eye(generators.dimension)
    for i in range(generators.arity):
        product = product @ resolvent(generators, i, lam[i])
    return product


def laplace_resolvent(generators: GeneratorTuple, i: int, lam: complex, horizon: float = 40.0,
                      panels: int = 80, order: int = 16) -> np.ndarray:
    """int_0^H exp(-lam s) T_{A_i}(s) ds by composite Gauss-Legendre."""
    edges = np.linspace(0.0, horizon, panels + 1)
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        x, w = gauss_legendre(a, b, order)
        nodes.append(x)
        weights.append(w)
    nodes, weights = np.concatenate(nodes), np.concatenate(weights)
    flows = scipy.linalg.expm(nodes[:, None, None] * generators.matrices[i][None])
    return np.einsum("k,kij->ij", weights * np.exp(-lam * nodes), flows)


def joint_spectrum(generators: GeneratorTuple, seed: int | None = None, retries: int = 3,
                   leakage_tol: float = 1e-8) -> JointSpectrum:
    """Simultaneous diagonalisation through a random combination sum_j c_j A_j.

    The eigenbasis of the combination is applied to every A_j and the
    off-diagonal leakage compared against leakage_tol * ||A_j||.
    """
    rng = np.random.default_rng(settings.SPECTRUM_SEED if seed is None else seed)
    mats = generators.matrices
    scale = np.array([max(np.linalg.norm(m), 1e-300) for m in mats])
    worst = np.inf
    for attempt in range(retries + 1):
        coefficients = rng.standard_normal(generators.arity)
        combination = np.tensordot(coefficients, mats, axes=1)
        _, basis = np.linalg.eig(combination)
        if np.linalg.cond(basis) > 1e12:
            logger.debug("joint_spectrum attempt %d: eigenbasis is singular", attempt)
            continue
        basis = basis / np.linalg.norm(basis, axis=0)
        inverse = np.linalg.inv(basis)
        rotated = inverse[None] @ mats @ basis[None]
        diagonals = np.diagonal(rotated, axis1=1, axis2=2)
        off = rotated - np.stack([np.diag(v) for v in diagonals])
        leakage = float(max(np.linalg.norm(off[j]) / scale[j] for j in range(generators.arity)))
        worst = min(worst, leakage)
        if leakage <= leakage_tol:
            eigenvalues = diagonals.T
            if not np.iscomplexobj(mats) and np.all(np.abs(eigenvalues.imag) <= 1e-12 * (1 + np.abs(eigenvalues))):
                eigenvalues = eigenvalues.real
                basis = basis.real
            keys = [np.round(eigenvalues[:, j].real, 12) for j in reversed(range(generators.arity))]
            order = np.lexsort(keys)
            return JointSpectrum(eigenvalues[order], basis[:, order], leakage)
        logger.warning("joint_spectrum attempt %d: leakage %.3g above %.1g", attempt, leakage, leakage_tol)
    raise NotDiagonalizableError(
        f"Tuple {generators.label} is not simultaneously diagonalizable (best leakage {worst:.3g})"
    )


def spectrum_of(generators: GeneratorTuple) -> JointSpectrum:
    """The planted spectrum when known, otherwise a computed one."""
    return generators.spectrum if generators.spectrum is not None else joint_spectrum(generators)


def real_spectrum(generators: GeneratorTuple) -> tuple[np.ndarray, np.ndarray]:
    """Real joint eigenvalues in (-inf, 0]^n and their basis, or SpectrumError."""
    spectrum = spectrum_of(generators)
    if not spectrum.is_real:
        raise SpectrumError(f"Tuple {generators.label} has complex joint eigenvalues")
    eigenvalues = np.real(spectrum.eigenvalues)
    scale = 1.0 + np.abs(eigenvalues).max(initial=0.0)
    if eigenvalues.max(initial=0.0) > 1e-10 * scale:
        raise SpectrumError(f"Tuple {generators.label} has eigenvalues with positive real part")
    return np.minimum(eigenvalues, 0.0), np.real_if_close(spectrum.basis)


def planted_tuple(eigenvalues, basis=None, label: str = "planted") -> GeneratorTuple:
    """A_j = P diag(lambda_j) P^{-1} with the joint spectrum attached."""
    eigenvalues = np.atleast_2d(np.asarray(eigenvalues))
    d = eigenvalues.shape[0]
    basis = np.eye(d) if basis is None else np.asarray(basis)
    if basis.shape != (d, d):
        raise DimensionMismatchError(f"Basis must be {d} x {d}, got {basis.shape}")
    if np.linalg.matrix_rank(basis) < d:
        raise InvalidTupleError(f"Basis of {label!r} is singular")
    spectrum = JointSpectrum(eigenvalues, basis)
    return GeneratorTuple(spectrum.reconstruct(), spectrum=spectrum, label=label)


def random_basis(rng: np.random.Generator, d: int, kind: str = "orthogonal") -> np.ndarray:
    """Orthogonal basis (normal tuples, M_A = 1) or a general one with cond <= 3."""
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    q = q * np.sign(np.diag(r))
    if kind == "orthogonal":
        return q
    if kind == "general":
        q2, r2 = np.linalg.qr(rng.standard_normal((d, d)))
        return q @ np.diag(rng.uniform(1.0, 3.0, d)) @ (q2 * np.sign(np.diag(r2)))
    raise ValueError(f"Unknown basis kind {kind!r}")


def pair_bound(a: GeneratorTuple, b: GeneratorTuple) -> float:
    """M = max(M_A, M_B)."""
    return max(a.bound, b.bound)


def difference_norms(a: GeneratorTuple, b: GeneratorTuple, kind: NormKind | str = NormKind.OPERATOR) -> np.ndarray:
    require_same_shape(a, b)
    return np.array([norm(a[i] - b[i], kind) for i in range(a.arity)])


def require_same_shape(a: GeneratorTuple, b: GeneratorTuple) -> None:
    if a.arity != b.arity or a.dimension != b.dimension:
        raise DimensionMismatchError(
            f"Tuples differ in shape: ({a.arity}, {a.dimension}) vs ({b.arity}, {b.dimension})"
        )


def commute_with(a: GeneratorTuple, b: GeneratorTuple, tolerance: float = 1e-10) -> bool:
    """Whether every A_i commutes with every B_j."""
    for x in a.matrices:
        for y in b.matrices:
            if np.linalg.norm(x @ y - y @ x) > tolerance * (1.0 + np.linalg.norm(x) * np.linalg.norm(y)):
                return False
    return True
