"""Deslauriers-Dubuc interpolet of degree 2 (cubic interpolatory subdivision).

The interpolet is 1 at the origin, 0 at every other integer, and is filled in
on finer dyadic grids by local cubic interpolation.  Its support is [-3, 3].
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np

SUPPORT = 3
MAX_DEPTH = 20
DEFAULT_DEPTH = 12

# 1-D hierarchisation stencil: offsets (in level-l grid steps) and weights
STENCIL = ((0, 1.0), (-1, -9 / 16), (1, -9 / 16), (-3, 1 / 16), (3, 1 / 16))


@dataclass(frozen=True)
class DyadicValueTable:
    """Values of the interpolet at ``k / 2^depth`` for ``k = -3 2^depth .. 3 2^depth``."""

    depth: int
    values: np.ndarray

    def __post_init__(self):
        size = 2 * SUPPORT * 2**self.depth + 1
        if self.values.shape != (size,):
            raise ValueError(f"depth {self.depth} table needs {size} values")
        self.values.setflags(write=False)

    @property
    def points(self) -> np.ndarray:
        half = SUPPORT * 2**self.depth
        return np.arange(-half, half + 1) / 2.0**self.depth

    def at(self, k: int) -> float:
        """Value at ``k / 2^depth``; zero outside the support."""
        half = SUPPORT * 2**self.depth
        if abs(k) > half:
            return 0.0
        return float(self.values[k + half])


def initial_table() -> DyadicValueTable:
    values = np.zeros(2 * SUPPORT + 1)
    values[SUPPORT] = 1.0
    return DyadicValueTable(0, values)


def refine(table: DyadicValueTable, rule: str = "symmetric") -> DyadicValueTable:
    """One subdivision step: depth ``J`` -> ``J + 1``.

    New midpoints between coarse neighbours ``k`` and ``k + 1`` get
    ``9/16 (v_k + v_{k+1}) - 1/16 (v_{k-1} + v_{k+2})``.  ``rule="printed"``
    uses the outer offsets ``k - 2`` and ``k + 3`` instead, for comparison only.
    """
    if rule == "symmetric":
        lo, hi = -1, 2
    elif rule == "printed":
        lo, hi = -2, 3
    else:
        raise ValueError(f"unknown refinement rule {rule!r}")
    v = table.values
    pad = 4
    padded = np.concatenate([np.zeros(pad), v, np.zeros(pad)])
    base = np.arange(len(v) - 1) + pad
    mid = 9 / 16 * (padded[base] + padded[base + 1]) - 1 / 16 * (
        padded[base + lo] + padded[base + hi]
    )
    out = np.empty(2 * len(v) - 1)
    out[0::2] = v
    out[1::2] = mid
    return DyadicValueTable(table.depth + 1, out)


@functools.lru_cache(maxsize=None)
def table_at_depth(depth: int, rule: str = "symmetric") -> DyadicValueTable:
    if not 0 <= depth <= MAX_DEPTH:
        raise ValueError(f"depth must be in [0, {MAX_DEPTH}]")
    if depth == 0:
        return initial_table()
    return refine(table_at_depth(depth - 1, rule), rule)


def interpolet_eval(x, depth: int = DEFAULT_DEPTH):
    """Interpolet value at ``x``, snapped to the nearest depth-``depth`` dyadic point.

    Exact at dyadic rationals with denominator at most ``2^depth``; elsewhere
    the snap error shrinks as the depth grows.
    """
    table = table_at_depth(depth)
    x = np.asarray(x, dtype=float)
    half = SUPPORT * 2**depth
    k = np.rint(x * 2.0**depth)
    inside = np.abs(k) <= half
    idx = np.where(inside, k, 0).astype(np.int64) + half
    out = np.where(inside, table.values[idx], 0.0)
    return float(out) if out.ndim == 0 else out


def interpolet_basis(level, index, depth: int = DEFAULT_DEPTH) -> Callable[[np.ndarray], np.ndarray]:
    """Tensor-product basis ``x -> prod_j phi(2^{l_j} x_j - i_j)`` on (m, d) arrays."""
    level = tuple(np.atleast_1d(level).tolist())
    index = tuple(np.atleast_1d(index).tolist())

    def evaluate(x):
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.ones(pts.shape[0])
        for j, (l, i) in enumerate(zip(level, index)):
            out *= interpolet_eval(2.0**l * pts[:, j] - i, depth)
        return out

    return evaluate


def stencil_apply(u: Callable[[np.ndarray], np.ndarray], level, index, zero_extend: bool = False) -> float:
    """Surplus ``I_{l,i} u`` from the 5-point stencil applied along every axis.

    ``u`` takes an (m, d) array.  It is called at all ``5^d`` stencil points,
    some of which fall outside [0, 1]^d next to the boundary; pass
    ``zero_extend=True`` when ``u`` is only meaningful on the cube, to treat
    those values as 0.
    """
    level = np.atleast_1d(level).astype(int)
    index = np.atleast_1d(index).astype(int)
    d = len(level)
    combos = list(itertools.product(STENCIL, repeat=d))
    pts = np.array(
        [[(index[j] + off) / 2.0 ** level[j] for j, (off, _) in enumerate(c)] for c in combos]
    )
    weights = np.array([np.prod([w for _, w in c]) for c in combos])
    vals = np.asarray(u(pts), dtype=float).reshape(-1)
    if zero_extend:
        inside = np.all((pts >= 0.0) & (pts <= 1.0), axis=1)
        vals = np.where(inside, vals, 0.0)
    return float(weights @ vals)
