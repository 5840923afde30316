"""
Norm bounds for psi(A) - psi(B).

    ||psi(A) - psi(B)||     <= -(2e/(e-1)) n M^n psi(-(M/2n) ||A - B||)
    ||psi(A) - psi(B)||_J   <= M^{n+1} sum_i omega_i ||A_i - B_i||_J
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from app.core.bernstein import BernsteinFunction, evaluate, omega
from app.core.operator_calculus import psi_of
from app.core.semigroups import (
    GeneratorTuple,
    NormKind,
    difference_norms,
    norm,
    pair_bound,
    require_same_shape,
)

logger = logging.getLogger(__name__)

THEOREM1_CONSTANT = 2.0 * math.e / (math.e - 1.0)


@dataclass
class BoundReport:
    pair_id: str
    lhs: float
    rhs: float
    norm_kind: str
    budget: float = 0.0

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return self.margin >= -self.budget

    def to_dict(self) -> dict:
        return {
            "pair_id": self.pair_id,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "norm": self.norm_kind,
            "budget": self.budget,
            "pass": self.passed,
        }


def _difference(psi: BernsteinFunction, a: GeneratorTuple, b: GeneratorTuple):
    require_same_shape(a, b)
    left, right = psi_of(psi, a), psi_of(psi, b)
    return left.value - right.value, left.quadrature_budget + right.quadrature_budget


def theorem1_rhs(psi: BernsteinFunction, gaps: np.ndarray, bound: float) -> float:
    n = psi.arity
    return -THEOREM1_CONSTANT * n * bound**n * float(evaluate(psi, -(bound / (2.0 * n)) * gaps))


def theorem1_check(psi: BernsteinFunction, a: GeneratorTuple, b: GeneratorTuple, pair_id: str = "") -> BoundReport:
    difference, budget = _difference(psi, a, b)
    bound = pair_bound(a, b)
    gaps = difference_norms(a, b, NormKind.OPERATOR)
    rhs = theorem1_rhs(psi, gaps, bound)
    report = BoundReport(pair_id, norm(difference), rhs, NormKind.OPERATOR.value,
                         budget + THEOREM1_CONSTANT * psi.arity * bound**psi.arity * psi.budget)
    if not report.passed:
        logger.warning("Operator-norm bound violated for %s: lhs %.6g > rhs %.6g", pair_id, report.lhs, report.rhs)
    return report


def theorem2_check(psi: BernsteinFunction, a: GeneratorTuple, b: GeneratorTuple,
                   kind: NormKind | str = NormKind.TRACE, pair_id: str = "") -> BoundReport:
    kind = NormKind(kind)
    rates = omega(psi)
    difference, budget = _difference(psi, a, b)
    bound = pair_bound(a, b)
    rhs = bound ** (a.arity + 1) * float(rates @ difference_norms(a, b, kind))
    if kind is NormKind.TRACE:
        budget *= a.dimension
    report = BoundReport(pair_id, norm(difference, kind), rhs, kind.value, budget)
    if not report.passed:
        logger.warning("Ideal-norm bound violated for %s: lhs %.6g > rhs %.6g", pair_id, report.lhs, report.rhs)
    return report


def theorem1_scaling_check(psi: BernsteinFunction, a: GeneratorTuple, b: GeneratorTuple,
                           factors=(0.25, 0.5, 0.75, 1.0)) -> dict:
    """Operator-norm right-hand side along B_f = A + f (B - A); nondecreasing in f."""
    require_same_shape(a, b)
    factors = sorted(float(f) for f in factors)
    gaps = difference_norms(a, b, NormKind.OPERATOR)
    bound = pair_bound(a, b)
    values = [theorem1_rhs(psi, f * gaps, bound) for f in factors]
    steps = np.diff(values)
    return {
        "factors": factors,
        "rhs": values,
        "monotone": bool(np.all(steps >= -1e-12 * (1.0 + np.abs(values[1:])))),
    }
