import logging
from dataclasses import dataclass

import numpy as np

from app.core.errors import DimensionMismatchError, DomainError
from app.core.state import PointLike, as_phase_array, dims_from_phase, dims_from_u, log_gradients, w_vector
from app.services.lax import lax_analyzer

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TodaPoint:
    """Flaschka variables: a (off-diagonal, n-1 entries), b (diagonal, n entries)"""
    a: np.ndarray
    b: np.ndarray

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate([self.a, self.b])


class CoordinateMaps:
    """Volterra lift from phase space and the Hénon map to Toda variables"""

    def volterra_map(self, x: PointLike) -> np.ndarray:
        """u_i = w(x, i); always strictly positive"""
        return w_vector(x)

    def volterra_jacobian(self, x: PointLike) -> np.ndarray:
        """
        N x M Jacobian of the Volterra map.

        Row i holds u_i at p_i, u_i/2 at q_{i+1} and -u_i/2 at q_{i-1}.
        """
        arr = as_phase_array(x)
        dim = dims_from_phase(arr)
        return w_vector(arr)[:, None] * log_gradients(dim.N)

    def project_vector(self, x: PointLike, v: np.ndarray) -> np.ndarray:
        """Push a phase-space tangent vector forward to u-space"""
        arr = as_phase_array(x)
        v = np.asarray(v, dtype=float)
        if v.shape != arr.shape:
            raise DimensionMismatchError(f"tangent vector length {len(v)} != {len(arr)}")
        return self.volterra_jacobian(arr) @ v

    def henon_map(self, u: np.ndarray) -> TodaPoint:
        u = np.asarray(u, dtype=float)
        n = dims_from_u(u).n
        if np.any(u < 0):
            raise DomainError("Hénon map needs u >= 0 (square roots of products)")
        padded = np.concatenate(([0.0], u))
        a = np.array([-0.5 * np.sqrt(padded[2 * i] * padded[2 * i - 1]) for i in range(1, n)])
        b = np.array([0.5 * (padded[2 * i - 1] + padded[2 * i - 2]) for i in range(1, n + 1)])
        return TodaPoint(a=a, b=b)

    def henon_jacobian(self, u: np.ndarray) -> np.ndarray:
        """(2n-1) x N Jacobian of the Hénon map; rows ordered (a, b)"""
        u = np.asarray(u, dtype=float)
        n = dims_from_u(u).n
        if np.any(u <= 0):
            raise DomainError("Hénon Jacobian needs strictly positive u")
        N = len(u)
        jac = np.zeros((N, N))
        for i in range(1, n):
            root = np.sqrt(u[2 * i - 1] * u[2 * i - 2])
            jac[i - 1, 2 * i - 1] = -0.25 * u[2 * i - 2] / root
            jac[i - 1, 2 * i - 2] = -0.25 * u[2 * i - 1] / root
        for i in range(1, n + 1):
            row = n - 1 + i - 1
            jac[row, 2 * i - 2] = 0.5
            if i >= 2:
                jac[row, 2 * i - 3] = 0.5
        return jac

    def toda_rhs(self, t: TodaPoint) -> TodaPoint:
        a = np.asarray(t.a, dtype=float)
        b = np.asarray(t.b, dtype=float)
        a_dot = a * (b[1:] - b[:-1])
        padded = np.concatenate(([0.0], a, [0.0]))
        b_dot = 2.0 * (padded[1:] ** 2 - padded[:-1] ** 2)
        return TodaPoint(a=a_dot, b=b_dot)

    def conjugacy_residual(self, u: np.ndarray) -> float:
        """||D(henon)(u) km(u) - toda(henon(u))||_inf"""
        u = np.asarray(u, dtype=float)
        lhs = self.henon_jacobian(u) @ lax_analyzer.km_rhs(u)
        rhs = self.toda_rhs(self.henon_map(u)).flat
        residual = float(np.max(np.abs(lhs - rhs)))
        logger.debug(f"Hénon conjugacy residual {residual:.3e} at n={dims_from_u(u).n}")
        return residual


coordinate_maps = CoordinateMaps()
