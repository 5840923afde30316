"""
Nonpositive Bernstein functions of n variables.

A function psi in T_n is stored through its Levy triplet (c0, c1, mu):

    psi(s) = c0 + c1 . s + sum_k w_k (exp(s . v_k) - 1),      s in (-inf, 0]^n

where the Levy measure mu is always a finite set of weighted nodes. Densities are
discretised once, at construction, and every node set records the error budget
its truncation window costs. The small jumps cut off below the window are folded
into a drift vector, so the window error is second order in s.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import special, stats

from app.core.config import settings
from app.core.errors import (
    ArityMismatchError,
    InvalidMeasureError,
    MomentInfiniteError,
    UnsupportedCatalogError,
)
from app.core.quadrature import _leggauss, geometric_panels

logger = logging.getLogger(__name__)


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class NodeSet:
    """Weighted nodes of one measure component.

    ``window`` is None for exact atoms; density-backed sets record the
    truncation window, the certified budget (valid for |s| <= ``s_scale``) and
    the drift that compensates the jumps below the window.
    """

    points: np.ndarray
    weights: np.ndarray
    label: str
    window: tuple[float, float] | None = None
    budget: float = 0.0
    s_scale: float = math.inf
    drift: np.ndarray | None = None

    def __post_init__(self):
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if points.shape[0] != weights.shape[0]:
            raise InvalidMeasureError(
                f"{self.label}: {points.shape[0]} points but {weights.shape[0]} weights"
            )
        object.__setattr__(self, "points", _frozen(points))
        object.__setattr__(self, "weights", _frozen(weights))
        if self.drift is not None:
            object.__setattr__(self, "drift", _frozen(self.drift))

    @property
    def is_atomic(self) -> bool:
        return self.window is None

    def scaled(self, factor: float) -> "NodeSet":
        drift = None if self.drift is None else self.drift * factor
        return NodeSet(self.points, self.weights * factor, self.label, self.window,
                       self.budget * factor, self.s_scale, drift)


@dataclass(frozen=True)
class LevyMeasure:
    """Finite node representation of a Levy measure on R_+^n minus the origin.

    ``moment_orders[i]`` is the highest finite moment order of the *exact*
    measure in coordinate i (``math.inf`` when all are finite). It is declared
    by the constructor of the measure, since a truncated node set always has
    finite moments.
    """

    arity: int
    node_sets: tuple[NodeSet, ...]
    moment_orders: tuple[float, ...] = ()

    def __post_init__(self):
        if self.arity < 1:
            raise InvalidMeasureError(f"Arity must be a positive integer, got {self.arity}")
        if not self.moment_orders:
            object.__setattr__(self, "moment_orders", (math.inf,) * self.arity)
        if len(self.moment_orders) != self.arity:
            raise InvalidMeasureError("moment_orders must have one entry per coordinate")
        for node_set in self.node_sets:
            self._check(node_set)

    def _check(self, node_set: NodeSet) -> None:
        points, weights = node_set.points, node_set.weights
        if points.size and points.shape[1] != self.arity:
            raise InvalidMeasureError(
                f"{node_set.label}: points have {points.shape[1]} coordinates, measure arity is {self.arity}"
            )
        if not (np.all(np.isfinite(points)) and np.all(np.isfinite(weights))):
            raise InvalidMeasureError(f"{node_set.label}: non-finite node or weight")
        if np.any(points < 0.0):
            raise InvalidMeasureError(f"{node_set.label}: node outside R_+^n")
        if points.size and np.any(points.max(axis=1) <= 0.0):
            raise InvalidMeasureError(f"{node_set.label}: node at the origin")
        if np.any(weights <= 0.0):
            raise InvalidMeasureError(f"{node_set.label}: masses must be strictly positive")
        if node_set.drift is not None and (
            node_set.drift.shape != (self.arity,) or np.any(node_set.drift < 0.0)
        ):
            raise InvalidMeasureError(f"{node_set.label}: drift must be a nonnegative {self.arity}-vector")

    @classmethod
    def from_atoms(cls, points, masses, label: str = "atoms") -> "LevyMeasure":
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(points.shape[1], (NodeSet(points, masses, label),))

    @property
    def points(self) -> np.ndarray:
        if not self.node_sets:
            return np.zeros((0, self.arity))
        return np.vstack([ns.points.reshape(-1, self.arity) for ns in self.node_sets])

    @property
    def masses(self) -> np.ndarray:
        if not self.node_sets:
            return np.zeros(0)
        return np.concatenate([ns.weights for ns in self.node_sets])

    @property
    def drift(self) -> np.ndarray:
        total = np.zeros(self.arity)
        for ns in self.node_sets:
            if ns.drift is not None:
                total = total + ns.drift
        return total

    @property
    def budget(self) -> float:
        return float(sum(ns.budget for ns in self.node_sets))

    @property
    def atoms(self) -> tuple[NodeSet, ...]:
        return tuple(ns for ns in self.node_sets if ns.is_atomic)

    @property
    def density_nodes(self) -> tuple[NodeSet, ...]:
        return tuple(ns for ns in self.node_sets if not ns.is_atomic)

    @property
    def s_scale(self) -> float:
        return min((ns.s_scale for ns in self.node_sets), default=math.inf)

    @property
    def levy_integral(self) -> float:
        """sum mass * min(1, |v|_1); finite for a valid Levy measure."""
        pts = self.points
        if not len(pts):
            return 0.0
        return float(self.masses @ np.minimum(1.0, pts.sum(axis=1)))

    def moment(self, i: int, order: int = 1) -> float:
        value = float(self.masses @ self.points[:, i] ** order)
        if order == 1:
            value += float(self.drift[i])
        return value


@dataclass(frozen=True)
class CatalogTag:
    """Identifies a catalog entry so closed-form oracles can be looked up."""

    name: str
    params: tuple[tuple[str, Any], ...] = ()
    parts: tuple["CatalogTag", ...] = ()

    def param(self, key: str, default: Any = None) -> Any:
        return dict(self.params).get(key, default)

    def __str__(self) -> str:
        inner = [f"{k}={v}" for k, v in self.params] + [str(p) for p in self.parts]
        return f"{self.name}({', '.join(inner)})"


@dataclass(frozen=True)
class BernsteinFunction:
    measure: LevyMeasure
    c0: float = 0.0
    c1: np.ndarray | None = None
    tag: CatalogTag | None = None

    def __post_init__(self):
        n = self.measure.arity
        c1 = np.zeros(n) if self.c1 is None else np.asarray(self.c1, dtype=float).reshape(-1)
        if c1.shape != (n,):
            raise ArityMismatchError(f"c1 has {c1.shape[0]} entries, arity is {n}")
        if not math.isfinite(self.c0) or self.c0 > 0.0:
            raise InvalidMeasureError(f"c0 must be a nonpositive real, got {self.c0}")
        if np.any(c1 < 0.0) or not np.all(np.isfinite(c1)):
            raise InvalidMeasureError("c1 must have nonnegative finite entries")
        object.__setattr__(self, "c0", float(self.c0))
        object.__setattr__(self, "c1", _frozen(c1))

    @property
    def arity(self) -> int:
        return self.measure.arity

    @property
    def budget(self) -> float:
        return self.measure.budget

    @property
    def linear(self) -> np.ndarray:
        """c1 plus the head-compensation drift: the full coefficient of s."""
        return self.c1 + self.measure.drift

    def __call__(self, s) -> float | np.ndarray:
        return evaluate(self, s)

    def __str__(self) -> str:
        return str(self.tag) if self.tag is not None else f"T_{self.arity}[{len(self.measure.masses)} nodes]"


@dataclass(frozen=True)
class DividedDifference:
    """phi_i(s, s_{n+1}) of psi together with its pushforward measure mu_i."""

    source: BernsteinFunction
    index: int
    omega: float
    function: BernsteinFunction

    @property
    def measure(self) -> LevyMeasure:
        return self.function.measure

    def __call__(self, s, s_extra) -> float:
        s = np.asarray(s, dtype=float).reshape(-1)
        return float(evaluate(self.function, np.append(s, s_extra)))

    def direct(self, s, s_extra) -> float:
        """Difference quotient of the source, the defining formula of phi_i."""
        s = np.asarray(s, dtype=float).reshape(-1)
        swapped = s.copy()
        swapped[self.index] = s_extra
        gap = s[self.index] - s_extra
        if gap == 0.0:
            return float(partial_deriv(self.source, self.index, s)) - self.omega
        return (float(evaluate(self.source, s)) - float(evaluate(self.source, swapped))) / gap - self.omega


@dataclass(frozen=True)
class SubordinationMeasure:
    """Bernstein-Widder measure nu_t with exp(t psi(z)) = int exp(z.u) dnu_t(u)."""

    t: float
    base: CatalogTag | None
    node_sets: tuple[NodeSet, ...]
    arity: int

    @property
    def points(self) -> np.ndarray:
        return np.vstack([ns.points.reshape(-1, self.arity) for ns in self.node_sets])

    @property
    def masses(self) -> np.ndarray:
        return np.concatenate([ns.weights for ns in self.node_sets])

    @property
    def budget(self) -> float:
        return float(sum(ns.budget for ns in self.node_sets))

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    def transform(self, z) -> float | np.ndarray:
        """int exp(z.u) dnu_t(u) for z in (-inf, 0]^n."""
        z = _as_arguments(z, self.arity)
        values = np.exp(z @ self.points.T) @ self.masses
        return float(values[0]) if values.shape == (1,) else values


@dataclass(frozen=True)
class GridSpec:
    lower: float = -10.0
    upper: float = -0.1
    points: int = 7
    step: float = 1e-3
    tolerance: float = 1e-10


@dataclass
class BernsteinDiagnostic:
    function: str
    grid: GridSpec
    violations: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "function": self.function,
            "grid": vars(self.grid),
            "passed": self.passed,
            "violations": self.violations,
        }


def _as_arguments(s, arity: int) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.ndim == 0:
        s = s.reshape(1, 1)
    elif s.ndim == 1:
        s = s.reshape(1, -1)
    if s.shape[-1] != arity:
        raise ArityMismatchError(f"Argument has {s.shape[-1]} components, function arity is {arity}")
    if not np.all(np.isfinite(s)):
        raise ValueError("Arguments must be finite")
    if np.any(s > 0.0):
        raise ValueError("Arguments must lie in (-inf, 0]^n")
    return s


def _unwrap(values: np.ndarray) -> float | np.ndarray:
    return float(values[0]) if values.shape == (1,) else values


def evaluate(psi: BernsteinFunction, s) -> float | np.ndarray:
    """psi(s) from the Levy triplet; accepts one point or a stack of points.

    The exact zero vector stands for s -> -0.
    """
    s = _as_arguments(s, psi.arity)
    measure = psi.measure
    values = psi.c0 + s @ psi.linear
    if len(measure.masses):
        values = values + np.expm1(s @ measure.points.T) @ measure.masses
    return _unwrap(values)


def _require_moment(psi: BernsteinFunction, i: int, order: int) -> None:
    if not 0 <= i < psi.arity:
        raise ArityMismatchError(f"Index {i} out of range for arity {psi.arity}")
    if psi.measure.moment_orders[i] < order:
        raise MomentInfiniteError(
            f"{psi}: moment of order {order} in coordinate {i} is infinite"
        )


def partial_deriv(psi: BernsteinFunction, i: int, s) -> float | np.ndarray:
    """d psi / d s_i; at s = 0 this is omega_i."""
    _require_moment(psi, i, 1)
    s = _as_arguments(s, psi.arity)
    measure = psi.measure
    values = np.full(s.shape[0], psi.linear[i])
    if len(measure.masses):
        values = values + np.exp(s @ measure.points.T) @ (measure.masses * measure.points[:, i])
    return _unwrap(values)


def second_partial(psi: BernsteinFunction, i: int, s) -> float | np.ndarray:
    _require_moment(psi, i, 2)
    s = _as_arguments(s, psi.arity)
    measure = psi.measure
    values = np.zeros(s.shape[0])
    if len(measure.masses):
        values = np.exp(s @ measure.points.T) @ (measure.masses * measure.points[:, i] ** 2)
    return _unwrap(values)


def omega(psi: BernsteinFunction) -> np.ndarray:
    zero = np.zeros(psi.arity)
    return np.array([partial_deriv(psi, i, zero) for i in range(psi.arity)])


def divided_difference(psi: BernsteinFunction, i: int, order: int | None = None) -> DividedDifference:
    """Divided difference phi_i with its arity-(n+1) pushforward measure.

    Every source node (v, m) is spread over w in [-v_i, v_i] with density m/2
    and mapped to u_i = (v_i + w)/2, u_{n+1} = (v_i - w)/2, other coordinates
    unchanged. The w-integral uses a fixed Gauss-Legendre rule.
    """
    order = order or settings.PUSHFORWARD_ORDER
    omega_i = float(partial_deriv(psi, i, np.zeros(psi.arity)))
    x, g = _leggauss(order)
    n = psi.arity

    node_sets = []
    for ns in psi.measure.node_sets:
        keep = ns.points[:, i] > 0.0
        if not np.any(keep):
            continue
        points, masses = ns.points[keep], ns.weights[keep]
        v_i = points[:, i]
        w = v_i[:, None] * x[None, :]
        pushed = np.repeat(points, order, axis=0)
        pushed[:, i] = (0.5 * (v_i[:, None] + w)).ravel()
        extra = (0.5 * (v_i[:, None] - w)).ravel()
        weights = (0.5 * masses[:, None] * v_i[:, None] * g[None, :]).ravel()
        node_sets.append(NodeSet(np.column_stack([pushed, extra]), weights,
                                 f"pushforward[{ns.label}]", ns.window, ns.budget, ns.s_scale))

    orders = psi.measure.moment_orders
    reduced = orders[i] - 1
    new_orders = tuple(min(o, reduced) for j, o in enumerate(orders) if j != i)
    new_orders = new_orders[:i] + (reduced,) + new_orders[i:] + (reduced,)
    measure = LevyMeasure(n + 1, tuple(node_sets), new_orders)
    logger.debug("Divided difference of %s in coordinate %d: %d nodes", psi, i, len(measure.masses))
    return DividedDifference(psi, i, omega_i, BernsteinFunction(measure, 0.0, np.zeros(n + 1)))


def tilt(psi: BernsteinFunction, shift: float) -> BernsteinFunction:
    """psi_w(s) = psi(s + w 1) for w <= 0, again a Bernstein function.

    The measure is reweighted by exp(w |v|_1), so every moment is finite when
    w < 0; this is how exponentially stable tuples get a Frechet derivative.
    """
    if shift > 0.0 or not math.isfinite(shift):
        raise ValueError(f"Tilt must be a finite nonpositive real, got {shift}")
    anchor = np.full(psi.arity, shift)
    node_sets = []
    for ns in psi.measure.node_sets:
        weights = ns.weights * np.exp(shift * ns.points.sum(axis=1))
        keep = weights > 0.0
        if np.any(keep):
            node_sets.append(NodeSet(ns.points[keep], weights[keep], f"tilt[{ns.label}]",
                                     ns.window, ns.budget, ns.s_scale, ns.drift))
    orders = psi.measure.moment_orders if shift == 0.0 else (math.inf,) * psi.arity
    tag = None
    if psi.tag is not None:
        tag = CatalogTag("tilt", (("shift", shift),), (psi.tag,))
    return BernsteinFunction(
        LevyMeasure(psi.arity, tuple(node_sets), orders),
        c0=float(evaluate(psi, anchor)),
        c1=psi.c1,
        tag=tag,
    )


def _unit_mass(arity: int, t: float, tag: CatalogTag | None) -> SubordinationMeasure:
    return SubordinationMeasure(t, tag, (NodeSet(np.zeros((1, arity)), [1.0], "origin"),), arity)


def _poisson_law(tag: CatalogTag, rate: float, tail: float) -> tuple[NodeSet, ...]:
    v0 = np.asarray(tag.param("v0"), dtype=float)
    kmax = int(stats.poisson.isf(tail, rate))
    k = np.arange(kmax + 1)
    masses = stats.poisson.pmf(k, rate)
    keep = masses > 0.0
    budget = float(stats.poisson.sf(kmax, rate))
    logger.debug("Poisson subordinator rate %.6g: %d atoms, tail %.3g", rate, kmax + 1, budget)
    return (NodeSet(k[keep, None] * v0[None, :], masses[keep], "poisson", budget=budget),)


def _stable_half_law(tag: CatalogTag, arity: int, tau: float, budget: float) -> tuple[NodeSet, ...]:
    # hitting-time density tau/(2 sqrt(pi)) u^{-3/2} exp(-tau^2 / 4u)
    j = tag.param("coordinate", 0)
    lo = tau**2 / 200.0
    hi = (tau / (2.0 * special.erfinv(budget))) ** 2
    nodes, weights = geometric_panels(lo, hi, settings.PANEL_ORDER, settings.PANEL_RATIO)
    density = tau / (2.0 * math.sqrt(math.pi)) * nodes**-1.5 * np.exp(-tau**2 / (4.0 * nodes))
    mass = density * weights
    keep = mass > 0.0
    points = np.zeros((int(keep.sum()), arity))
    points[:, j] = nodes[keep]
    head = float(special.erfc(tau / (2.0 * math.sqrt(lo))))
    tail = float(special.erf(tau / (2.0 * math.sqrt(hi))))
    sets = [NodeSet(points, mass[keep], "stable-1/2", (lo, hi), budget=tail + head)]
    if head > 0.0:
        sets.append(NodeSet(np.zeros((1, arity)), [head], "stable-1/2 head"))
    return tuple(sets)


def _gamma_law(tag: CatalogTag, arity: int, shape: float, budget: float) -> tuple[NodeSet, ...]:
    # Gamma(shape, rate lam): exp(t psi_lam(z)) = lam^t (lam - z)^{-t}
    lam = float(tag.param("lam"))
    j = tag.param("coordinate", 0)
    lo = budget / settings.S_SCALE
    hi = special.gammainccinv(shape, budget) / lam
    if hi <= lo:
        hi = 2.0 * lo
    nodes, weights = geometric_panels(lo, hi, settings.PANEL_ORDER, settings.PANEL_RATIO)
    log_density = shape * math.log(lam) + (shape - 1.0) * np.log(nodes) - lam * nodes - special.gammaln(shape)
    mass = np.exp(log_density) * weights
    keep = mass > 0.0
    points = np.zeros((int(keep.sum()), arity))
    points[:, j] = nodes[keep]
    head = float(special.gammainc(shape, lam * lo))
    tail = float(special.gammaincc(shape, lam * hi))
    # jumps below the window are lumped at the origin; |z| * lo * head bounds the error
    sets = [NodeSet(points, mass[keep], "gamma", (lo, hi), budget=tail + settings.S_SCALE * lo * head)]
    if head > 0.0:
        sets.append(NodeSet(np.zeros((1, arity)), [head], "gamma head"))
    return tuple(sets)


def widder_measure(psi: BernsteinFunction, t: float, budget: float | None = None) -> SubordinationMeasure:
    """Subordination measure nu_t of a catalog function.

    Supported: dirac (Poisson law), frac_power with alpha = 1/2 (stable-1/2
    hitting-time law), log_resolvent (Gamma law), and positive scalings of
    these. A killing c0 and a drift c1 of the function scale and shift the law.
    """
    if t < 0.0 or not math.isfinite(t):
        raise ValueError(f"t must be a finite nonnegative real, got {t}")
    tag = psi.tag
    if tag is None:
        raise UnsupportedCatalogError(f"{psi}: subordination needs a catalog function")
    if t == 0.0:
        return _unit_mass(psi.arity, t, tag)
    budget = settings.QUADRATURE_BUDGET if budget is None else budget

    if tag.name == "scale":
        inner = widder_measure(_scaled_inner(psi), float(tag.param("factor")) * t, budget)
        return SubordinationMeasure(t, tag, inner.node_sets, inner.arity)

    mass = float(tag.param("mass", 1.0))
    if tag.name == "dirac":
        sets = _poisson_law(tag, mass * t, settings.POISSON_TAIL)
    elif tag.name == "frac_power" and float(tag.param("alpha")) == 0.5:
        sets = _stable_half_law(tag, psi.arity, mass * t, budget)
    elif tag.name == "log_resolvent":
        sets = _gamma_law(tag, psi.arity, mass * t, budget)
    else:
        raise UnsupportedCatalogError(f"No subordination law for {tag}")

    if psi.c0 != 0.0 or np.any(psi.c1 != 0.0):
        killing = math.exp(t * psi.c0)
        shift = t * psi.c1
        sets = tuple(NodeSet(ns.points + shift, ns.weights * killing, ns.label, ns.window,
                             ns.budget * killing) for ns in sets)
    return SubordinationMeasure(t, tag, sets, psi.arity)


def _scaled_inner(psi: BernsteinFunction) -> BernsteinFunction:
    factor = float(psi.tag.param("factor"))
    inner_tag = psi.tag.parts[0]
    measure = LevyMeasure(psi.arity, tuple(ns.scaled(1.0 / factor) for ns in psi.measure.node_sets),
                          psi.measure.moment_orders)
    return BernsteinFunction(measure, psi.c0 / factor, psi.c1 / factor, inner_tag)


def validate_bernstein(psi: BernsteinFunction, grid: GridSpec | None = None) -> BernsteinDiagnostic:
    """Finite-difference audit of Definition 1 on a product grid.

    Checks psi <= 0, first differences >= 0 and second (pure and mixed)
    differences >= 0. Only a proxy: absolute monotonicity of all orders is
    not decidable numerically.
    """
    grid = grid or GridSpec()
    n = psi.arity
    h = grid.step
    upper = min(grid.upper, -2.0 * h)
    axis = np.linspace(grid.lower, upper, grid.points)
    base = np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1).reshape(-1, n)
    report = BernsteinDiagnostic(str(psi), grid)

    f0 = np.atleast_1d(evaluate(psi, base))
    tol = grid.tolerance * (1.0 + np.abs(f0))
    for point, value, eps in zip(base, f0, tol):
        if value > eps:
            report.violations.append({"check": "nonpositive", "point": point.tolist(), "value": float(value)})

    eye = np.eye(n) * h
    shifted = [np.atleast_1d(evaluate(psi, base + eye[i])) for i in range(n)]
    for i in range(n):
        diff = shifted[i] - f0
        for point, value, eps in zip(base, diff, tol):
            if value < -eps:
                report.violations.append(
                    {"check": f"first_difference[{i}]", "point": point.tolist(), "value": float(value)}
                )
        for j in range(i, n):
            both = np.atleast_1d(evaluate(psi, base + eye[i] + eye[j]))
            second = both - shifted[i] - shifted[j] + f0
            for point, value, eps in zip(base, second, tol):
                if value < -eps:
                    report.violations.append(
                        {"check": f"second_difference[{i},{j}]", "point": point.tolist(), "value": float(value)}
                    )
    if report.violations:
        logger.warning("%s: %d Bernstein violations on the grid", psi, len(report.violations))
    return report
