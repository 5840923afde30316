"""
Gauss-Legendre rules used to discretise Levy and subordination densities.

Densities with algebraic singularities at 0 and slow tails are integrated on
geometrically graded panels: every panel [a, r*a] gets the same fixed-order
rule, so the relative resolution is uniform across many decades.
"""
import math
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=32)
def _leggauss(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(a: float, b: float, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the ``order``-point rule on [a, b]."""
    x, w = _leggauss(order)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def geometric_panels(lo: float, hi: float, order: int = 16, ratio: float = 2.0) -> tuple[np.ndarray, np.ndarray]:
    """Composite rule on [lo, hi] with panel edges in geometric progression.

    Returns nodes in increasing order and the matching weights.
    """
    if not (0.0 < lo < hi):
        raise ValueError(f"Panel window must satisfy 0 < lo < hi, got [{lo}, {hi}]")
    if ratio <= 1.0:
        raise ValueError(f"Panel ratio must exceed 1, got {ratio}")
    count = max(1, math.ceil(math.log(hi / lo) / math.log(ratio)))
    edges = np.geomspace(lo, hi, count + 1)
    x, w = _leggauss(order)
    left = edges[:-1, None]
    half = 0.5 * (edges[1:, None] - left)
    nodes = left + half * (x[None, :] + 1.0)
    weights = half * w[None, :]
    return nodes.ravel(), weights.ravel()
