"""
Bochner-Phillips calculus on matrix generator tuples.

psi(A) = c0 I + sum_j c1_j A_j + int (T_A(v) - I) dmu(v), with the integral
replaced by the finite node sum of the Levy measure. The spectral path
P diag(psi(lambda)) P^{-1} is kept as an independent cross-check.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
import scipy.linalg

from app.core.bernstein import (
    BernsteinFunction,
    divided_difference,
    evaluate,
    partial_deriv,
    second_partial,
    tilt,
    widder_measure,
)
from app.core.errors import (
    ArityMismatchError,
    CommutationError,
    DimensionMismatchError,
    InvalidTupleError,
)
from app.core.semigroups import (
    GeneratorTuple,
    NormKind,
    norm,
    real_spectrum,
    semigroup_batch,
)

logger = logging.getLogger(__name__)

CHUNK = 4096
SAFETY = 10.0


@dataclass(frozen=True)
class OperatorResult:
    value: np.ndarray
    quadrature_budget: float
    method_tag: str

    def __post_init__(self):
        if self.quadrature_budget < 0.0:
            raise ValueError("quadrature budget must be nonnegative")


def _check_arity(psi: BernsteinFunction, generators: GeneratorTuple) -> None:
    if psi.arity != generators.arity:
        raise ArityMismatchError(f"{psi} has arity {psi.arity}, tuple has {generators.arity} generators")


def _budget_factor(generators: GeneratorTuple) -> float:
    """Operator-norm factor converting a scalar quadrature budget to a matrix one."""
    factor = generators.bound ** generators.arity
    if generators.spectrum is not None:
        factor = max(factor, float(np.linalg.cond(generators.spectrum.basis)))
    return factor


def _node_sum(generators: GeneratorTuple, points: np.ndarray, weights: np.ndarray,
              minus_identity: bool = False) -> np.ndarray:
    """sum_k weights_k T_A(points_k), or sum_k weights_k (T_A(points_k) - I)."""
    d = generators.dimension
    eye = np.eye(d)
    total = np.zeros((d, d), dtype=generators.matrices.dtype)
    for start in range(0, len(weights), CHUNK):
        flows = semigroup_batch(generators, points[start:start + CHUNK])
        if minus_identity:
            flows = flows - eye
        total = total + np.einsum("k,kij->ij", weights[start:start + CHUNK], flows)
    return total


def psi_of(psi: BernsteinFunction, generators: GeneratorTuple, method: str = "bochner") -> OperatorResult:
    """psi(A) by the Levy node sum ("bochner") or by the joint spectrum ("spectral")."""
    _check_arity(psi, generators)
    generators.require_valid()
    d = generators.dimension

    if method == "spectral":
        eigenvalues, basis = real_spectrum(generators)
        values = np.atleast_1d(evaluate(psi, eigenvalues))
        value = basis @ np.diag(values) @ np.linalg.inv(basis)
        return OperatorResult(value, psi.budget * float(np.linalg.cond(basis)), "spectral")
    if method != "bochner":
        raise ValueError(f"Unknown psi_of method {method!r}")

    value = psi.c0 * np.eye(d) + np.tensordot(psi.linear, generators.matrices, axes=1)
    measure = psi.measure
    if len(measure.masses):
        value = value + _node_sum(generators, measure.points, measure.masses, minus_identity=True)
    radius = max(np.abs(np.linalg.eigvals(m)).max() for m in generators.matrices)
    if radius > measure.s_scale:
        logger.warning("%s: spectral radius %.3g exceeds the certified range %.3g", psi, radius, measure.s_scale)
    return OperatorResult(value, psi.budget * _budget_factor(generators), "bochner")


def diagonal_oracle(psi: BernsteinFunction, generators: GeneratorTuple) -> dict:
    """Residual between the Levy node sum and P diag(psi(lambda)) P^{-1}."""
    bochner = psi_of(psi, generators)
    spectral = psi_of(psi, generators, method="spectral")
    return {
        "residual": norm(bochner.value - spectral.value),
        "budget": bochner.quadrature_budget,
        "value_norm": norm(bochner.value),
    }


def subordinate(psi: BernsteinFunction, generators: GeneratorTuple, t: float,
                method: str = "exp_of_psi") -> OperatorResult:
    """g_t(A): exp(t psi(A)) or the Bernstein-Widder integral of T_A."""
    if t < 0.0:
        raise ValueError(f"t must be nonnegative, got {t}")
    _check_arity(psi, generators)
    generators.require_valid()
    d = generators.dimension
    if t == 0.0:
        return OperatorResult(np.eye(d), 0.0, method)

    if method == "exp_of_psi":
        inner = psi_of(psi, generators)
        value = scipy.linalg.expm(t * inner.value)
        return OperatorResult(value, t * inner.quadrature_budget * max(1.0, norm(value)), method)
    if method != "widder":
        raise ValueError(f"Unknown subordination method {method!r}")

    law = widder_measure(psi, t)
    value = _node_sum(generators, law.points, law.masses)
    return OperatorResult(value, law.budget * _budget_factor(generators), method)


def partial_operator_deriv(psi: BernsteinFunction, generators: GeneratorTuple, i: int) -> OperatorResult:
    """d psi(A) / d s_i = linear_i I + sum_k w_k v_{k,i} T_A(v_k)."""
    _check_arity(psi, generators)
    partial_deriv(psi, i, np.zeros(psi.arity))
    generators.require_valid()
    measure = psi.measure
    value = psi.linear[i] * np.eye(generators.dimension)
    if len(measure.masses):
        value = value + _node_sum(generators, measure.points, measure.masses * measure.points[:, i])
    return OperatorResult(value, psi.budget * _budget_factor(generators), f"partial[{i}]")


def _directions(generators: GeneratorTuple, directions) -> np.ndarray:
    directions = np.asarray(directions)
    if directions.ndim == 2 and generators.arity == 1:
        directions = directions[None]
    if directions.shape != generators.matrices.shape:
        raise DimensionMismatchError(
            f"Direction has shape {directions.shape}, tuple matrices are {generators.matrices.shape}"
        )
    return directions


def frechet_derivative(psi: BernsteinFunction, generators: GeneratorTuple, directions) -> np.ndarray:
    """psi_A^nabla(C) = sum_i (d psi(A) / d s_i) C_i."""
    directions = _directions(generators, directions)
    value = np.zeros_like(directions[0], dtype=np.result_type(directions, generators.matrices))
    for i in range(generators.arity):
        value = value + partial_operator_deriv(psi, generators, i).value @ directions[i]
    return value


def frechet_derivative_stable(psi: BernsteinFunction, generators: GeneratorTuple, directions,
                              omega: float) -> np.ndarray:
    """Frechet derivative for an exponentially stable tuple, ||T_{A_i}(t)|| <= M exp(omega t).

    psi(A) = psi_omega(A - omega I) with psi_omega = tilt(psi, omega), whose
    first moments are finite even where those of psi are not.
    """
    if omega >= 0.0:
        raise ValueError(f"omega must be negative, got {omega}")
    return frechet_derivative(tilt(psi, omega), generators.shifted(omega), directions)


@dataclass
class RemainderStudy:
    frame: pd.DataFrame  # h, remainder, ratio
    slope: float
    ratio_drop: float
    predicted: float
    norm_kind: str

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "ratio_drop": self.ratio_drop,
            "predicted_coefficient": self.predicted,
            "norm": self.norm_kind,
            "rows": self.frame.to_dict(orient="records"),
        }


def _second_order_coefficient(psi: BernsteinFunction, generators: GeneratorTuple, directions,
                              kind: NormKind) -> float:
    """M^{n+1} 1/2 sum_i d^2 psi / d s_i^2 |_{-0} ||C_i||^2, or inf without second moments."""
    zero = np.zeros(psi.arity)
    try:
        curvature = [float(second_partial(psi, i, zero)) for i in range(psi.arity)]
    except ValueError:
        return math.inf
    sizes = [norm(c, kind) for c in directions]
    bound = generators.bound ** (generators.arity + 1)
    return bound * 0.5 * sum(k * c * c for k, c in zip(curvature, sizes))


def frechet_remainder_study(
    psi: BernsteinFunction,
    generators: GeneratorTuple,
    directions,
    h_grid=(1e-1, 1e-2, 1e-3, 1e-4),
    kind: NormKind | str = NormKind.OPERATOR,
) -> RemainderStudy:
    """||psi(A + hC) - psi(A) - h psi_A^nabla(C)|| along h_grid, with a log-log slope."""
    kind = NormKind(kind)
    directions = _directions(generators, directions)
    h_grid = sorted((float(h) for h in h_grid), reverse=True)
    trial = generators.perturbed(directions, h_grid[0])
    if not trial.diagnostic.checks["commute"]:
        raise CommutationError("Direction breaks commutativity of the tuple")

    base = psi_of(psi, generators).value
    linear = frechet_derivative(psi, generators, directions)
    rows = []
    for h in h_grid:
        moved = generators.perturbed(directions, h)
        try:
            value = psi_of(psi, moved).value
        except InvalidTupleError as exc:
            raise CommutationError(f"A + {h} C is not a valid tuple") from exc
        remainder = norm(value - base - h * linear, kind)
        rows.append({"h": h, "remainder": remainder, "ratio": remainder / h})
    frame = pd.DataFrame(rows, columns=["h", "remainder", "ratio"])

    positive = frame[frame["remainder"] > 0.0]
    if len(positive) >= 2:
        slope = float(np.polyfit(np.log(positive["h"]), np.log(positive["remainder"]), 1)[0])
    else:
        slope = math.inf
    first, last = frame["ratio"].iloc[0], frame["ratio"].iloc[-1]
    ratio_drop = math.inf if last == 0.0 else float(first / last)
    predicted = _second_order_coefficient(psi, generators, directions, kind)
    logger.debug("Remainder study for %s: slope %.3f, ratio drop %.3g", psi, slope, ratio_drop)
    return RemainderStudy(frame, slope, ratio_drop, predicted, kind.value)


@dataclass
class IdentityCheck:
    residual: float
    diagonal_residual: float
    budget: float

    def to_dict(self) -> dict:
        return vars(self).copy()


def divided_difference_identity_check(psi: BernsteinFunction, i: int, generators: GeneratorTuple,
                                      extra) -> IdentityCheck:
    """Residuals of the operator divided-difference identities.

    residual:          phi_i(A, A') (A_i - A') - [psi(A) - psi(A_i -> A')] + omega_i (A_i - A')
    diagonal_residual: phi_i(A, A_i) - (d psi(A) / d s_i - omega_i I)
    """
    _check_arity(psi, generators)
    extra = np.asarray(extra)
    extended = generators.extend(extra)
    if not extended.diagnostic.checks["commute"]:
        raise CommutationError(f"Extra generator does not commute with tuple {generators.label}")
    phi = divided_difference(psi, i)
    gap = generators[i] - extra

    left = psi_of(phi.function, extended)
    swapped = psi_of(psi, generators.replace(i, extra))
    direct = psi_of(psi, generators)
    right = direct.value - swapped.value - phi.omega * gap
    residual = norm(left.value @ gap - right)

    diagonal = psi_of(phi.function, generators.extend(generators[i]))
    partial = partial_operator_deriv(psi, generators, i)
    diagonal_residual = norm(diagonal.value - (partial.value - phi.omega * np.eye(generators.dimension)))

    budget = SAFETY * (left.quadrature_budget * norm(gap) + swapped.quadrature_budget
                       + direct.quadrature_budget + diagonal.quadrature_budget + partial.quadrature_budget)
    return IdentityCheck(residual, diagonal_residual, budget)
