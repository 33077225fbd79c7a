"""Registry of test functions in the Korobov space on [0, 1]^d."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class KorobovTarget:
    """A test function with a bound on its mixed second-derivative seminorm.

    Parameters
    ----------
    name : str
        Registry key.
    dimension : int
        Input dimension ``d``.
    evaluator : callable
        Vectorised map from an (m, d) array to an (m,) array.
    seminorm : float
        Bound on ``max_{|alpha|_inf <= 2} ||D^alpha f||_inf``.
    seminorm_exact : bool
        False when the seminorm was estimated by finite differences.
    vanishes_on_boundary : bool
        Whether ``f`` is zero on the boundary of the cube.
    note : str
        How the seminorm was obtained.
    """

    name: str
    dimension: int
    evaluator: Callable[[np.ndarray], np.ndarray]
    seminorm: float
    seminorm_exact: bool = True
    vanishes_on_boundary: bool = True
    note: str = ""

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.seminorm < 0:
            raise ValueError("seminorm must be non-negative")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim <= 1 and not (self.dimension == 1 and x.ndim == 1 and x.size > 1)
        pts = np.atleast_2d(x).reshape(-1, self.dimension)
        out = np.asarray(self.evaluator(pts), dtype=float).reshape(-1)
        return float(out[0]) if scalar else out


def _poly(x):
    return np.prod(4.0 * x * (1.0 - x), axis=1)


def _sine(x):
    return np.prod(np.sin(np.pi * x), axis=1)


def _zero(x):
    return np.zeros(x.shape[0])


def poly_target(d: int) -> KorobovTarget:
    return KorobovTarget(
        "P", d, _poly, 8.0**d, True, True,
        "per factor g = 4x(1-x): |g| <= 1, |g'| <= 4, |g''| = 8; the tensor max is 8^d",
    )


def sine_target(d: int) -> KorobovTarget:
    return KorobovTarget(
        "S", d, _sine, math.pi ** (2 * d), True, True,
        "per factor sin(pi x): derivatives up to order 2 are bounded by pi^2; the tensor max is pi^(2d)",
    )


def zero_target(d: int) -> KorobovTarget:
    return KorobovTarget("Z", d, _zero, 0.0, True, True, "identically zero")


_FACTORIES = {"P": poly_target, "S": sine_target, "Z": zero_target}
ALIASES = {"poly": "P", "sine": "S", "zero": "Z"}


def registry(d: int = 2) -> list[KorobovTarget]:
    """All registered targets in dimension ``d``."""
    return [factory(d) for factory in _FACTORIES.values()]


def get_target(name: str, d: int) -> KorobovTarget:
    """Look up a target by name (``P``, ``S``, ``Z`` or ``poly``, ``sine``, ``zero``)."""
    key = ALIASES.get(name.lower(), name.upper())
    if key not in _FACTORIES:
        raise KeyError(f"unknown target {name!r}; choose from {sorted(_FACTORIES)}")
    return _FACTORIES[key](d)


def estimate_seminorm(f: Callable[[np.ndarray], np.ndarray], d: int, samples: int = 256,
                      h: float = 1e-3, seed: int = 0, inflation: float = 1.1) -> float:
    """Finite-difference estimate of ``max_alpha ||D^alpha f||_inf`` over ``alpha in {0,1,2}^d``."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(2 * h, 1 - 2 * h, size=(samples, d))
    stencils = {0: ((0, 1.0),), 1: ((-1, -0.5 / h), (1, 0.5 / h)), 2: ((-1, 1 / h**2), (0, -2 / h**2), (1, 1 / h**2))}
    best = 0.0
    for alpha in itertools.product((0, 1, 2), repeat=d):
        acc = np.zeros(samples)
        for combo in itertools.product(*(stencils[a] for a in alpha)):
            shift = np.array([s for s, _ in combo]) * h
            weight = np.prod([w for _, w in combo])
            acc += weight * np.asarray(f(x + shift), dtype=float)
        best = max(best, float(np.max(np.abs(acc))))
    return inflation * best


def custom_target(name: str, d: int, f: Callable[[np.ndarray], np.ndarray],
                  seminorm: float | None = None) -> KorobovTarget:
    """Wrap a user function; the seminorm is estimated when not supplied."""
    if seminorm is not None:
        return KorobovTarget(name, d, f, float(seminorm), True, True, "supplied by caller")
    est = estimate_seminorm(f, d)
    return KorobovTarget(name, d, f, est, False, True, "finite-difference estimate, inflated by 10%")
