"""Seeded random tuples and pairs, and the randomized bound suites built on them."""
import logging

import numpy as np
import pandas as pd

from app.core.bernstein import BernsteinFunction
from app.core.bounds import theorem1_check, theorem2_check
from app.core.catalog import CatalogEntry, register_entry
from app.core.semigroups import GeneratorTuple, NormKind, planted_tuple, random_basis

logger = logging.getLogger(__name__)

EIGEN_RANGE = (-5.0, -0.1)
DELTA_RANGE = (1e-3, 1.0)


def random_tuple(seed: int, n: int, d: int, basis_kind: str = "orthogonal",
                 eigen_range: tuple[float, float] = EIGEN_RANGE) -> GeneratorTuple:
    """Planted tuple P diag(lambda_j) P^{-1} with eigenvalues uniform in eigen_range."""
    rng = np.random.default_rng(seed)
    basis = random_basis(rng, d, basis_kind)
    eigenvalues = rng.uniform(*eigen_range, size=(d, n))
    return planted_tuple(eigenvalues, basis, label=f"random[{seed}]")


def random_pair(seed: int, n: int, d: int, basis_kind: str = "orthogonal",
                eigen_range: tuple[float, float] = EIGEN_RANGE,
                delta_range: tuple[float, float] = DELTA_RANGE) -> tuple[GeneratorTuple, GeneratorTuple]:
    """A and B = A - delta U in a common basis; delta log-uniform in delta_range, U uniform in [0, 1]."""
    rng = np.random.default_rng(seed)
    basis = random_basis(rng, d, basis_kind)
    lam = rng.uniform(*eigen_range, size=(d, n))
    delta = float(np.exp(rng.uniform(np.log(delta_range[0]), np.log(delta_range[1]))))
    mu = lam - delta * rng.uniform(0.0, 1.0, size=(d, n))
    return (planted_tuple(lam, basis, label=f"pair[{seed}].A"),
            planted_tuple(mu, basis, label=f"pair[{seed}].B"))


def run_bound_suite(
    psi: BernsteinFunction,
    theorem: int,
    count: int = 100,
    seed: int = 0,
    d: int = 4,
    kind: NormKind | str = NormKind.TRACE,
    basis_kind: str = "orthogonal",
) -> pd.DataFrame:
    """One row (seed, lhs, rhs, margin, pass) per random pair; member k uses seed + k."""
    rows = []
    for member in range(count):
        member_seed = seed + member
        a, b = random_pair(member_seed, psi.arity, d, basis_kind)
        if theorem == 1:
            report = theorem1_check(psi, a, b, pair_id=str(member_seed))
        elif theorem == 2:
            report = theorem2_check(psi, a, b, kind, pair_id=str(member_seed))
        else:
            raise ValueError(f"Unknown bound theorem {theorem}")
        rows.append({"seed": member_seed, "lhs": report.lhs, "rhs": report.rhs,
                     "margin": report.margin, "pass": report.passed})
    frame = pd.DataFrame(rows, columns=["seed", "lhs", "rhs", "margin", "pass"])
    failures = int((~frame["pass"]).sum()) if len(frame) else 0
    logger.info("Bound suite %d for %s: %d members, %d violations", theorem, psi, count, failures)
    return frame


for _entry in (
    CatalogEntry("planted", "tuple", "P diag(lambda_j) P^{-1} from explicit eigenvalue tuples and basis",
                 ("eigenvalues", "basis"), planted_tuple),
    CatalogEntry("random_tuple", "tuple", "seeded planted tuple, eigenvalues uniform in [-5, -0.1]",
                 ("seed", "n", "d", "basis_kind"), random_tuple),
    CatalogEntry("random_pair", "tuple", "seeded pair A, B = A - delta U sharing a basis",
                 ("seed", "n", "d", "basis_kind"), random_pair),
):
    register_entry(_entry)
