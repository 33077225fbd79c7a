"""Sparse-grid hierarchical basis on [0, 1]^d.

Basis functions are tensor products of dilated/translated copies of a
univariate mother function, ``phi_{l,i}(x) = phi(2^l x - i)`` with odd ``i``.
The sparse grid of budget ``n`` keeps every level vector with
``|l|_1 <= n + d - 1``.
"""

from __future__ import annotations

import enum
import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np

LEVEL_CAP = 30
INT64_MAX = 2**63 - 1

Evaluator = Callable[[np.ndarray], np.ndarray]


class Mother(enum.Enum):
    HAT = "hat"
    INTERPOLET_L2 = "interpolet_l2"


@dataclass(frozen=True, order=True)
class LevelIndex:
    """Address ``(l, i)`` of one hierarchical basis function."""

    level: tuple[int, ...]
    index: tuple[int, ...]

    def __post_init__(self):
        level = tuple(int(v) for v in self.level)
        index = tuple(int(v) for v in self.index)
        object.__setattr__(self, "level", level)
        object.__setattr__(self, "index", index)
        if len(level) != len(index) or not level:
            raise ValueError("level and index must be non-empty and of equal length")
        for l, i in zip(level, index):
            if l < 1 or l > LEVEL_CAP:
                raise ValueError(f"level {l} outside [1, {LEVEL_CAP}]")
            if i % 2 == 0 or not 1 <= i <= 2**l - 1:
                raise ValueError(f"index {i} must be odd and in [1, 2^{l} - 1]")

    @property
    def dim(self) -> int:
        return len(self.level)

    @property
    def level_sum(self) -> int:
        return sum(self.level)

    def node(self) -> np.ndarray:
        """Grid point ``i / 2^l`` where the basis function peaks."""
        return np.array([i / 2.0**l for l, i in zip(self.level, self.index)])

    def sort_key(self):
        return (self.level_sum, self.level, self.index)


def _check_dims(d: int, n: int) -> None:
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if n < 1:
        raise ValueError(f"level budget must be >= 1, got {n}")
    if n > LEVEL_CAP:
        raise ValueError(f"level budget {n} exceeds cap {LEVEL_CAP}")


def hat_eval(x):
    """Standard hat ``(1 - |x|)_+``."""
    return np.maximum(1.0 - np.abs(x), 0.0)


def basis_eval(li: LevelIndex, x) -> np.ndarray | float:
    """Evaluate the hat basis function ``phi_{l,i}`` at ``x`` (shape (d,) or (m, d))."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim <= 1
    pts = np.atleast_2d(x).reshape(-1, li.dim)
    out = np.ones(pts.shape[0])
    for j, (l, i) in enumerate(zip(li.level, li.index)):
        out *= hat_eval(2.0**l * pts[:, j] - i)
    return float(out[0]) if scalar else out


def level_vectors(d: int, n: int) -> list[tuple[int, ...]]:
    """Level vectors ``l >= 1`` with ``|l|_1 <= n + d - 1``, ordered by (|l|_1, l)."""
    _check_dims(d, n)
    out = []
    for s in range(d, n + d):
        out.extend(_compositions(s, d))
    return out


def _compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    # positive compositions of ``total`` into ``parts`` summands, lexicographic
    if parts == 1:
        yield (total,)
        return
    for first in range(1, total - parts + 2):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def enumerate_indices(d: int, n: int) -> list[LevelIndex]:
    """All ``(l, i)`` of the sparse grid, ordered lexicographically by (|l|_1, l, i)."""
    out = []
    for lv in level_vectors(d, n):
        ranges = [range(1, 2**l, 2) for l in lv]
        out.extend(LevelIndex(lv, idx) for idx in itertools.product(*ranges))
    return out


def count_indices(d: int, n: int) -> int:
    """Number of sparse-grid basis functions, ``sum_{i<n} 2^i binom(d-1+i, d-1)``."""
    _check_dims(d, n)
    total = sum(2**i * math.comb(d - 1 + i, d - 1) for i in range(n))
    if total > INT64_MAX:
        raise OverflowError(f"count_indices({d}, {n}) = {total} exceeds int64 range")
    return total


def count_indices_closed_form(d: int, n: int) -> int:
    """Alternating closed form ``(-1)^d + 2^n sum_{i<d} binom(n+d-1, i) (-2)^(d-1-i)``."""
    _check_dims(d, n)
    total = (-1) ** d + 2**n * sum(
        math.comb(n + d - 1, i) * (-2) ** (d - 1 - i) for i in range(d)
    )
    if total > INT64_MAX:
        raise OverflowError(f"closed-form count for ({d}, {n}) exceeds int64 range")
    return total


def a_factor(d: int, n: int) -> int:
    """``A(d, n) = sum_{k<d} binom(n + d - 1, k)``."""
    return sum(math.comb(n + d - 1, k) for k in range(d))


def error_bound(d: int, n: int, seminorm: float) -> float:
    """Sup-norm interpolation error bound ``(2 s / 8^d) 4^-n A(d, n)``."""
    if seminorm < 0:
        raise ValueError("seminorm must be non-negative")
    return 2.0 * seminorm / 8.0**d * 4.0**-n * a_factor(d, n)


@dataclass(frozen=True)
class ErrorBudget:
    """Target tolerance and the seminorm bound of the function being approximated.

    ``eps_tilde`` is the per-basis-function tolerance ``eps / (2 s)``.  A zero
    seminorm (the zero function) is allowed and gives an infinite ``eps_tilde``.
    """

    eps: float
    seminorm: float

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.seminorm < 0:
            raise ValueError(f"seminorm must be non-negative, got {self.seminorm}")

    @property
    def eps_tilde(self) -> float:
        if self.seminorm == 0:
            return math.inf
        return self.eps / (2.0 * self.seminorm)


def select_level(d: int, budget: ErrorBudget, cap: int = LEVEL_CAP) -> int:
    """Smallest ``n`` with ``error_bound(d, n, s) <= eps / 2`` (linear scan from 1)."""
    for n in range(1, cap + 1):
        if error_bound(d, n, budget.seminorm) <= budget.eps / 2:
            return n
    raise ValueError(
        f"no level n <= {cap} meets eps={budget.eps} for d={d}, "
        f"seminorm={budget.seminorm}; raise the cap or the tolerance"
    )


@dataclass(frozen=True)
class SparseGridInterpolant:
    """Surplus coefficients over a sparse grid, with fast evaluation.

    Evaluation groups coefficients per level vector; within one level vector
    the hat supports are disjoint, so each point touches one coefficient per
    level vector.
    """

    dimension: int
    budget: int
    mother: Mother
    surpluses: Mapping[LevelIndex, float]
    _blocks: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        limit = self.budget + self.dimension - 1
        blocks: dict[tuple[int, ...], np.ndarray] = {}
        for li, v in self.surpluses.items():
            if li.dim != self.dimension:
                raise ValueError(f"{li} has wrong dimension")
            if li.level_sum > limit:
                raise ValueError(f"{li} violates |l|_1 <= {limit}")
            arr = blocks.get(li.level)
            if arr is None:
                arr = np.zeros(tuple(2 ** (l - 1) for l in li.level))
                blocks[li.level] = arr
            arr[tuple((i - 1) // 2 for i in li.index)] = v
        object.__setattr__(self, "_blocks", blocks)

    def __len__(self) -> int:
        return len(self.surpluses)

    def __call__(self, x) -> np.ndarray | float:
        return interpolant_eval(self, x)

    def abs_sum(self) -> float:
        return float(sum(abs(v) for v in self.surpluses.values()))


def interpolant_eval(g: SparseGridInterpolant, x) -> np.ndarray | float:
    """Evaluate ``sum v_{l,i} phi_{l,i}(x)`` at one point or a batch of shape (m, d)."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim <= 1
    pts = np.atleast_2d(x).reshape(-1, g.dimension)
    out = np.zeros(pts.shape[0])
    if g.mother is Mother.HAT:
        for lv, coef in g._blocks.items():
            pos = []
            val = np.ones(pts.shape[0])
            for j, l in enumerate(lv):
                scaled = pts[:, j] * 2.0**l
                p = np.clip(np.floor(scaled / 2.0).astype(np.int64), 0, 2 ** (l - 1) - 1)
                val *= hat_eval(scaled - (2 * p + 1))
                pos.append(p)
            out += coef[tuple(pos)] * val
    else:
        from korobov.interpolet import interpolet_eval

        for lv, coef in g._blocks.items():
            # interpolet support is [-3, 3]: up to three odd centres per axis
            per_axis = []
            for j, l in enumerate(lv):
                scaled = pts[:, j] * 2.0**l
                centre = 2 * np.floor(scaled / 2.0).astype(np.int64) + 1
                opts = []
                for shift in (-2, 0, 2):
                    i = centre + shift
                    ok = (i >= 1) & (i <= 2**l - 1)
                    phi = np.where(ok, interpolet_eval(scaled - i), 0.0)
                    opts.append((np.clip((i - 1) // 2, 0, 2 ** (l - 1) - 1), phi))
                per_axis.append(opts)
            for combo in itertools.product(*per_axis):
                val = np.ones(pts.shape[0])
                for _, phi in combo:
                    val *= phi
                out += coef[tuple(p for p, _ in combo)] * val
    return float(out[0]) if scalar else out


def _reduce(k: int, l: int) -> tuple[int, int] | None:
    """Express the dyadic point ``k / 2^l`` as (level, odd index); None on the boundary."""
    if k <= 0 or k >= 2**l:
        return None
    while k % 2 == 0:
        k //= 2
        l -= 1
    return l, k


def grid_points(indices: Sequence[LevelIndex]) -> np.ndarray:
    return np.array([li.node() for li in indices]).reshape(len(indices), -1)


def _boundary_probe(d: int) -> np.ndarray:
    # face centres and corners of the unit cube
    pts = []
    for j in range(d):
        for side in (0.0, 1.0):
            p = np.full(d, 0.5)
            p[j] = side
            pts.append(p)
    if d <= 6:
        pts.extend(np.array(c, dtype=float) for c in itertools.product((0.0, 1.0), repeat=d))
    return np.array(pts)


def hierarchize_hat(f: Evaluator, d: int, n: int) -> SparseGridInterpolant:
    """Hierarchical surpluses of the hat-basis sparse-grid interpolant of ``f``.

    ``f`` is evaluated on interior nodes only, vectorised on an (m, d) array.
    Surpluses come from applying the 3-point stencil ``[-1/2, 1, -1/2]`` along
    each axis in turn (zero outside the open cube).
    """
    indices = enumerate_indices(d, n)
    nodes = grid_points(indices)
    values = np.asarray(f(nodes), dtype=float).reshape(-1)

    probe = np.asarray(f(_boundary_probe(d)), dtype=float).reshape(-1)
    if np.max(np.abs(probe)) > 1e-12:
        warnings.warn(
            "target does not vanish on the boundary of the unit cube; "
            "the sparse grid only interpolates at interior nodes",
            stacklevel=2,
        )

    table = {(li.level, li.index): float(v) for li, v in zip(indices, values)}
    for j in range(d):
        order = sorted(table, key=lambda key: -key[0][j])
        for lv, idx in order:
            acc = 0.0
            for k in (idx[j] - 1, idx[j] + 1):
                red = _reduce(k, lv[j])
                if red is None:
                    continue
                nl = lv[:j] + (red[0],) + lv[j + 1 :]
                ni = idx[:j] + (red[1],) + idx[j + 1 :]
                acc += table[(nl, ni)]
            table[(lv, idx)] -= 0.5 * acc
    surpluses = {li: table[(li.level, li.index)] for li in indices}
    return SparseGridInterpolant(d, n, Mother.HAT, surpluses)


@dataclass(frozen=True)
class CoefficientCheck:
    """Outcome of checking surpluses against ``2^-d 2^(-2|l|_1) s`` and ``sum |v| <= s``."""

    per_index: dict
    abs_sum: float
    abs_sum_ok: bool

    @property
    def all_ok(self) -> bool:
        return self.abs_sum_ok and all(self.per_index.values())

    @property
    def failures(self) -> list[LevelIndex]:
        return [li for li, ok in self.per_index.items() if not ok]


def coeff_bound_check(g: SparseGridInterpolant, seminorm: float, rtol: float = 1e-12) -> CoefficientCheck:
    """Check every surplus against its decay bound (decay base read as 2)."""
    flags = {}
    for li, v in g.surpluses.items():
        bound = 2.0**-li.dim * 2.0 ** (-2 * li.level_sum) * seminorm
        flags[li] = abs(v) <= bound * (1 + rtol) + 1e-300
    total = g.abs_sum()
    return CoefficientCheck(flags, total, total <= seminorm * (1 + rtol))
