"""
Built-in Bernstein functions and their closed forms.

Each factory returns a BernsteinFunction whose Levy measure is a finite node
set plus a ``CatalogTag`` naming the entry, so tests and reports can compare
the quadrature against the exact formula.

    dirac(v0, mass)                  m (exp(s.v0) - 1)
    frac_power(alpha, coordinate)    -m (-s_j)^alpha,           0 < alpha < 1
    log_resolvent(lam, coordinate)   m (log lam - log(lam - s_j))
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize, special

from app.core.bernstein import (
    BernsteinFunction,
    CatalogTag,
    LevyMeasure,
    NodeSet,
)
from app.core.config import settings
from app.core.errors import ArityMismatchError, UnsupportedCatalogError
from app.core.quadrature import geometric_panels

logger = logging.getLogger(__name__)


def dirac(v0, mass: float = 1.0) -> BernsteinFunction:
    v0 = np.atleast_1d(np.asarray(v0, dtype=float))
    if mass <= 0.0:
        raise ValueError(f"mass must be positive, got {mass}")
    measure = LevyMeasure.from_atoms(v0[None, :], [mass], label="dirac")
    tag = CatalogTag("dirac", (("v0", tuple(float(x) for x in v0)), ("mass", float(mass))))
    return BernsteinFunction(measure, tag=tag)


def _axis_points(nodes: np.ndarray, arity: int, coordinate: int) -> np.ndarray:
    if not 0 <= coordinate < arity:
        raise ArityMismatchError(f"coordinate {coordinate} out of range for arity {arity}")
    points = np.zeros((nodes.shape[0], arity))
    points[:, coordinate] = nodes
    return points


def frac_power(
    alpha: float,
    coordinate: int = 0,
    arity: int = 1,
    mass: float = 1.0,
    budget: float | None = None,
    s_scale: float | None = None,
    window: tuple[float, float] | None = None,
    order: int | None = None,
    ratio: float | None = None,
) -> BernsteinFunction:
    """-m (-s_j)^alpha with Levy density m alpha / Gamma(1 - alpha) u^{-1-alpha}.

    The window [eps, R] is chosen so that the compensated head and the tail
    each cost at most budget/2 for |s| <= s_scale.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    budget = budget or settings.QUADRATURE_BUDGET
    s_scale = s_scale or settings.S_SCALE
    c = mass * alpha / math.gamma(1.0 - alpha)
    if window is None:
        lo = (budget * (2.0 - alpha) / (c * s_scale**2)) ** (1.0 / (2.0 - alpha))
        hi = (2.0 * c / (alpha * budget)) ** (1.0 / alpha)
    else:
        lo, hi = window
    nodes, weights = geometric_panels(lo, hi, order or settings.PANEL_ORDER, ratio or settings.PANEL_RATIO)
    head = 0.5 * c * s_scale**2 * lo ** (2.0 - alpha) / (2.0 - alpha)
    tail = c * hi**-alpha / alpha
    drift = np.zeros(arity)
    drift[coordinate] = c * lo ** (1.0 - alpha) / (1.0 - alpha)
    node_set = NodeSet(_axis_points(nodes, arity, coordinate), c * nodes ** (-1.0 - alpha) * weights,
                       "frac_power", (lo, hi), head + tail, s_scale, drift)
    orders = [math.inf] * arity
    orders[coordinate] = 0.0
    logger.debug("frac_power(%g): %d nodes on [%.3g, %.3g]", alpha, nodes.size, lo, hi)
    tag = CatalogTag("frac_power", (("alpha", float(alpha)), ("coordinate", coordinate), ("mass", float(mass))))
    return BernsteinFunction(LevyMeasure(arity, (node_set,), tuple(orders)), tag=tag)


def _resolvent_tail(lam: float, mass: float, budget: float) -> float:
    # E1(x), the first-moment tail and the second-moment tail all below budget/2
    def excess(x: float) -> float:
        worst = max(1.0 / x, 1.0 / lam, (1.0 + x) / lam**2)
        return math.log(mass * worst) - x - math.log(0.5 * budget)

    upper = 1.0
    while excess(upper) > 0.0:
        upper *= 2.0
    if excess(1e-6) <= 0.0:
        return 1e-6
    return optimize.brentq(excess, 1e-6, upper)


def log_resolvent(
    lam: float,
    coordinate: int = 0,
    arity: int = 1,
    mass: float = 1.0,
    budget: float | None = None,
    s_scale: float | None = None,
    window: tuple[float, float] | None = None,
    order: int | None = None,
    ratio: float | None = None,
) -> BernsteinFunction:
    """m (log lam - log(lam - s_j)) with Levy density m u^{-1} exp(-lam u)."""
    if lam <= 0.0:
        raise ValueError(f"lam must be positive, got {lam}")
    budget = budget or settings.QUADRATURE_BUDGET
    s_scale = s_scale or settings.S_SCALE
    if window is None:
        lo = math.sqrt(2.0 * budget / (mass * s_scale**2))
        hi = _resolvent_tail(lam, mass, budget) / lam
        hi = max(hi, 2.0 * lo)
    else:
        lo, hi = window
    nodes, weights = geometric_panels(lo, hi, order or settings.PANEL_ORDER, ratio or settings.PANEL_RATIO)
    head = 0.25 * mass * s_scale**2 * lo**2
    tail = mass * float(special.exp1(lam * hi))
    drift = np.zeros(arity)
    drift[coordinate] = -mass * math.expm1(-lam * lo) / lam
    node_set = NodeSet(_axis_points(nodes, arity, coordinate), mass * np.exp(-lam * nodes) / nodes * weights,
                       "log_resolvent", (lo, hi), head + tail, s_scale, drift)
    tag = CatalogTag("log_resolvent", (("lam", float(lam)), ("coordinate", coordinate), ("mass", float(mass))))
    return BernsteinFunction(LevyMeasure(arity, (node_set,)), tag=tag)


def combine(*parts: BernsteinFunction) -> BernsteinFunction:
    """Pointwise sum; T_n is a cone."""
    if not parts:
        raise ValueError("combine needs at least one function")
    arity = parts[0].arity
    if any(p.arity != arity for p in parts):
        raise ArityMismatchError("combine needs functions of equal arity")
    node_sets = tuple(ns for p in parts for ns in p.measure.node_sets)
    orders = tuple(min(p.measure.moment_orders[i] for p in parts) for i in range(arity))
    tags = tuple(p.tag for p in parts)
    tag = CatalogTag("sum", (), tags) if all(t is not None for t in tags) else None
    return BernsteinFunction(
        LevyMeasure(arity, node_sets, orders),
        c0=sum(p.c0 for p in parts),
        c1=np.sum([p.c1 for p in parts], axis=0),
        tag=tag,
    )


def scale(factor: float, psi: BernsteinFunction) -> BernsteinFunction:
    if factor <= 0.0:
        raise ValueError(f"scale factor must be positive, got {factor}")
    measure = LevyMeasure(psi.arity, tuple(ns.scaled(factor) for ns in psi.measure.node_sets),
                          psi.measure.moment_orders)
    tag = None if psi.tag is None else CatalogTag("scale", (("factor", float(factor)),), (psi.tag,))
    return BernsteinFunction(measure, factor * psi.c0, factor * psi.c1, tag)


def closed_form(tag: CatalogTag, s) -> float:
    """Exact value of a catalog function at one point s in (-inf, 0]^n."""
    s = np.asarray(s, dtype=float).reshape(-1)
    mass = float(tag.param("mass", 1.0))
    if tag.name == "dirac":
        return mass * math.expm1(float(s @ np.asarray(tag.param("v0"))))
    if tag.name == "frac_power":
        return -mass * (-s[tag.param("coordinate")]) ** tag.param("alpha")
    if tag.name == "log_resolvent":
        lam = tag.param("lam")
        return mass * (math.log(lam) - math.log(lam - s[tag.param("coordinate")]))
    if tag.name == "sum":
        return sum(closed_form(part, s) for part in tag.parts)
    if tag.name == "scale":
        return tag.param("factor") * closed_form(tag.parts[0], s)
    if tag.name == "tilt":
        return closed_form(tag.parts[0], s + tag.param("shift"))
    raise UnsupportedCatalogError(f"No closed form for {tag}")


def closed_partial(tag: CatalogTag, i: int, s, order: int = 1) -> float:
    """Exact d^order psi / d s_i^order; math.inf where it blows up at s = 0."""
    s = np.asarray(s, dtype=float).reshape(-1)
    mass = float(tag.param("mass", 1.0))
    if tag.name == "dirac":
        v0 = np.asarray(tag.param("v0"))
        return mass * v0[i] ** order * math.exp(float(s @ v0))
    if tag.name in ("frac_power", "log_resolvent"):
        if i != tag.param("coordinate"):
            return 0.0
        x = -s[i]
        if tag.name == "log_resolvent":
            return mass * math.factorial(order - 1) / (tag.param("lam") + x) ** order
        alpha = tag.param("alpha")
        if x == 0.0:
            return math.inf
        coefficient = alpha if order == 1 else alpha * (1.0 - alpha)
        return mass * coefficient * x ** (alpha - order)
    if tag.name == "sum":
        return sum(closed_partial(part, i, s, order) for part in tag.parts)
    if tag.name == "scale":
        return tag.param("factor") * closed_partial(tag.parts[0], i, s, order)
    if tag.name == "tilt":
        return closed_partial(tag.parts[0], i, s + tag.param("shift"), order)
    raise UnsupportedCatalogError(f"No closed form for {tag}")


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    kind: str  # "function" | "tuple"
    description: str
    parameters: tuple[str, ...]
    factory: Callable = field(compare=False, repr=False)


CATALOG: dict[str, CatalogEntry] = {}


def register_entry(entry: CatalogEntry) -> CatalogEntry:
    CATALOG[entry.name] = entry
    return entry


for _entry in (
    CatalogEntry("dirac", "function", "m (exp(s.v0) - 1): single atom at v0",
                 ("v0", "mass"), dirac),
    CatalogEntry("frac_power", "function", "-m (-s_j)^alpha, 0 < alpha < 1: stable density",
                 ("alpha", "coordinate", "arity", "mass", "budget", "s_scale", "window", "order", "ratio"),
                 frac_power),
    CatalogEntry("log_resolvent", "function", "m (log lam - log(lam - s_j)): density u^-1 exp(-lam u)",
                 ("lam", "coordinate", "arity", "mass", "budget", "s_scale", "window", "order", "ratio"),
                 log_resolvent),
    CatalogEntry("sum", "function", "pointwise sum of catalog functions of equal arity",
                 ("parts",), combine),
    CatalogEntry("scale", "function", "positive multiple of a catalog function",
                 ("factor", "part"), scale),
):
    register_entry(_entry)
