"""
Helper functions for the lattice tests
"""
from typing import Callable, List

import numpy as np

from app.core.state import PhasePoint, dims, sample_points
from app.models.schemas import SampleSpec, Space


def u_points(n: int, count: int = 5, seed: int = 7, box=None) -> List[np.ndarray]:
    """
    Seeded u-space points inside the default (or given) box

    Args:
        n: Lattice parameter
        count: Number of points
        seed: Sampling seed

    Returns:
        list: Arrays of length 2n-1
    """
    return sample_points(SampleSpec(seed=seed, count=count, box=box), dims(n), Space.U)


def phase_points(n: int, count: int = 5, seed: int = 7, box=None) -> List[np.ndarray]:
    """Seeded phase-space points, flat (q, p) arrays of length 2(2n-1)"""
    return sample_points(SampleSpec(seed=seed, count=count, box=box), dims(n), Space.PHASE)


def origin(n: int) -> np.ndarray:
    return PhasePoint.origin(n).flat


def rel_error(actual, expected) -> float:
    """max |actual - expected| / max(1, max |expected|)"""
    actual = np.asarray(actual, dtype=float)
    expected = np.asarray(expected, dtype=float)
    return float(np.max(np.abs(actual - expected)) / max(1.0, np.max(np.abs(expected))))


def central_jacobian(F: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Plain central differences with a fixed step, independent of the library's own"""
    x = np.asarray(x, dtype=float)
    columns = []
    for c in range(len(x)):
        e = np.zeros_like(x)
        e[c] = h
        columns.append((np.asarray(F(x + e)) - np.asarray(F(x - e))) / (2.0 * h))
    return np.stack(columns, axis=-1)
