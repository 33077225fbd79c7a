"""Deterministic sup-norm error estimation on [0, 1]^d."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.stats import qmc

from korobov.hierarchy import enumerate_indices, grid_points

GRID_POINT_CAP = 2**17
MIN_SAMPLES = 10_000


@dataclass(frozen=True)
class SupError:
    """Largest observed ``|a - b|`` and where it happened."""

    value: float
    argmax: np.ndarray
    points: int


def grid_level_cap(d: int, cap: int = GRID_POINT_CAP) -> int:
    """Largest ``L`` with ``(2^L + 1)^d <= cap``."""
    L = 1
    while (2 ** (L + 1) + 1) ** d <= cap:
        L += 1
    return L


def tensor_grid(d: int, level: int) -> np.ndarray:
    t = np.linspace(0.0, 1.0, 2**level + 1)
    mesh = np.meshgrid(*([t] * d), indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def sample_points(d: int, samples: int = 2**14, level: int | None = None,
                  nodes: np.ndarray | None = None, seed: int = 0) -> np.ndarray:
    """Scrambled Sobol points, a full tensor grid at level ``min(level + 2, cap)``, and extra nodes.

    ``samples`` is rounded up to a power of two.  The set depends only on
    the arguments.
    """
    if samples < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} low-discrepancy samples")
    m = int(np.ceil(np.log2(samples)))
    sobol = qmc.Sobol(d, scramble=True, seed=seed).random_base2(m)
    cap = grid_level_cap(d)
    L = cap if level is None else min(level + 2, cap)
    parts = [sobol, tensor_grid(d, L)]
    if nodes is not None and len(nodes):
        parts.append(np.asarray(nodes, dtype=float).reshape(-1, d))
    return np.vstack(parts)


def sparse_nodes(d: int, n: int) -> np.ndarray:
    return grid_points(enumerate_indices(d, n))


def sup_error(a: Callable, b: Callable, d: int, samples: int = 2**14, level: int | None = None,
              nodes: np.ndarray | None = None, seed: int = 0,
              points: np.ndarray | None = None) -> SupError:
    """Estimate ``||a - b||_inf`` on ``[0, 1]^d``.

    Parameters
    ----------
    a, b : callable
        Vectorised maps from (m, d) arrays to (m,) arrays.
    level : int, optional
        Sparse-grid level; sets the tensor grid level and adds the sparse-grid nodes.
    points : ndarray, optional
        Use this point set instead of building one.
    """
    if points is None:
        if level is not None and nodes is None:
            nodes = sparse_nodes(d, level)
        points = sample_points(d, samples, level, nodes, seed)
    diff = np.abs(np.asarray(a(points), dtype=float).reshape(-1) - np.asarray(b(points), dtype=float).reshape(-1))
    k = int(np.argmax(diff))
    return SupError(float(diff[k]), points[k].copy(), len(points))
