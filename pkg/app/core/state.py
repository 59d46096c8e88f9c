"""
Dimension bookkeeping, index conventions and seeded sampling.

Indices in the public helpers `u_ext` and `w` are 1-based, as in the lattice
equations; array storage is 0-based. Phase points are flat vectors in the
canonical ordering (q_1..q_N, p_1..p_N).
"""
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Tuple, Union

import numpy as np

from app.core.config import settings
from app.core.errors import InvalidDimensionError, DimensionMismatchError
from app.models.schemas import Dimension, SampleSpec, Space

PRNG_NAME = "numpy.PCG64/SeedSequence.spawn"


def dims(n: int) -> Dimension:
    """Dimensions attached to lattice parameter n"""
    if n < 1:
        raise InvalidDimensionError(f"lattice parameter must be >= 1, got {n}")
    N = 2 * n - 1
    return Dimension(n=n, N=N, M=2 * N, lax_size=2 * n)


def dims_from_u(u: np.ndarray) -> Dimension:
    N = len(u)
    if N < 1 or N % 2 == 0:
        raise InvalidDimensionError(f"u-space dimension must be odd, got {N}")
    return dims((N + 1) // 2)


def dims_from_phase(x: np.ndarray) -> Dimension:
    M = len(x)
    if M % 2 or (M // 2) % 2 == 0:
        raise InvalidDimensionError(f"phase-space dimension must be 2(2n-1), got {M}")
    return dims((M // 2 + 1) // 2)


@dataclass(frozen=True)
class PhasePoint:
    """Lifted state (q, p); boundary values q_0 = q_2n = 0 are implicit"""
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        if len(self.q) != len(self.p):
            raise DimensionMismatchError("q and p must have equal length")

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.q, dtype=float), np.asarray(self.p, dtype=float)])

    @classmethod
    def from_flat(cls, x: np.ndarray) -> "PhasePoint":
        q, p = split_phase(x)
        return cls(q=q.copy(), p=p.copy())

    @classmethod
    def origin(cls, n: int) -> "PhasePoint":
        N = dims(n).N
        return cls(q=np.zeros(N), p=np.zeros(N))


PointLike = Union[np.ndarray, PhasePoint]


def as_phase_array(x: PointLike) -> np.ndarray:
    if isinstance(x, PhasePoint):
        return x.flat
    return np.asarray(x, dtype=float)


def split_phase(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    N = len(x) // 2
    return x[:N], x[N:]


def u_ext(u: np.ndarray, i: int) -> float:
    """u_i for 1 <= i <= N, zero outside (u_0 = u_2n = 0)"""
    if 1 <= i <= len(u):
        return float(u[i - 1])
    return 0.0


def w_vector(x: PointLike) -> np.ndarray:
    """All exponentials w_i = exp(p_i + (q_{i+1} - q_{i-1})/2), i = 1..N"""
    q, p = split_phase(as_phase_array(x))
    padded = np.concatenate(([0.0], q, [0.0]))
    return np.exp(p + 0.5 * (padded[2:] - padded[:-2]))


def w(x: PointLike, i: int) -> float:
    """Single exponential w_i; zero for i <= 0 or i >= 2n"""
    arr = as_phase_array(x)
    N = len(arr) // 2
    if 1 <= i <= N:
        return float(w_vector(arr)[i - 1])
    return 0.0


@lru_cache(maxsize=None)
def log_gradients(N: int) -> np.ndarray:
    """
    Constant N x M matrix G with G[k] = gradient of log w_{k+1}.

    Every exponential in the lifted picture satisfies dw_k = w_k G[k], so
    Jacobians and Hessians of w-linear expressions are products with G.
    """
    G = np.zeros((N, 2 * N))
    for k in range(N):
        G[k, N + k] = 1.0
        if k + 1 < N:
            G[k, k + 1] = 0.5
        if k - 1 >= 0:
            G[k, k - 1] = -0.5
    G.setflags(write=False)
    return G


def sample_points(spec: SampleSpec, dim: Dimension, space: Space) -> List[np.ndarray]:
    """
    Deterministic list of `spec.count` points inside the box.

    One PCG64 stream per point, spawned from SeedSequence(seed), so the k-th
    point does not depend on how many points are requested.
    """
    if space == Space.U:
        lo, hi = spec.box or settings.u_box
        if lo <= 0:
            raise InvalidDimensionError("u-space sampling box must be strictly positive")
        size = dim.N
    else:
        lo, hi = spec.box or settings.phase_box
        size = dim.M
    children = np.random.SeedSequence(spec.seed).spawn(spec.count)
    return [np.random.Generator(np.random.PCG64(child)).uniform(lo, hi, size=size) for child in children]
