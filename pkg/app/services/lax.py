import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from app.core.calculus import ScalarField
from app.core.config import settings
from app.core.errors import DomainError, InvalidDimensionError
from app.core.state import dims_from_u

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LaxPair:
    """Symmetric L with bandwidth two and antisymmetric B"""
    L: np.ndarray
    B: np.ndarray


def _require_positive(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    dims_from_u(u)
    if np.any(u <= 0):
        raise DomainError("Lax matrices need strictly positive u")
    return u


class LaxAnalyzer:
    """KM vector field, Lax pair, spectral invariants"""

    def km_rhs(self, u: np.ndarray) -> np.ndarray:
        """u_i (u_{i+1} - u_{i-1}) with u_0 = u_2n = 0"""
        u = np.asarray(u, dtype=float)
        padded = np.concatenate(([0.0], u, [0.0]))
        return u * (padded[2:] - padded[:-2])

    def _off_diagonal(self, u: np.ndarray) -> np.ndarray:
        return np.sqrt(u[:-1] * u[1:])

    def lax_l(self, u: np.ndarray) -> np.ndarray:
        u = _require_positive(u)
        padded = np.concatenate(([0.0], u, [0.0]))
        L = np.diag(padded[:-1] + padded[1:])
        if len(u) > 1:
            off = self._off_diagonal(u)
            L += np.diag(off, 2) + np.diag(off, -2)
        return L

    def lax_b(self, u: np.ndarray) -> np.ndarray:
        u = _require_positive(u)
        size = len(u) + 1
        if len(u) == 1:
            return np.zeros((size, size))
        off = self._off_diagonal(u)
        return 0.5 * (np.diag(off, 2) - np.diag(off, -2))

    def lax_pair(self, u: np.ndarray) -> LaxPair:
        return LaxPair(L=self.lax_l(u), B=self.lax_b(u))

    def lax_l_partials(self, u: np.ndarray) -> np.ndarray:
        """
        Array of shape (N, 2n, 2n) holding dL/du_m.

        Diagonal entries m and m+1 carry u_m linearly; the square-root
        entries next to it contribute off/(2 u_m).
        """
        u = _require_positive(u)
        N = len(u)
        size = N + 1
        dL = np.zeros((N, size, size))
        off = self._off_diagonal(u) if N > 1 else np.zeros(0)
        for m in range(N):
            dL[m, m, m] = 1.0
            dL[m, m + 1, m + 1] = 1.0
            for k in (m - 1, m):
                if 0 <= k < N - 1:
                    value = 0.5 * off[k] / u[m]
                    dL[m, k, k + 2] = value
                    dL[m, k + 2, k] = value
        return dL

    def lax_residual(self, u: np.ndarray) -> float:
        """||dL/dt along the KM flow - (BL - LB)||_inf"""
        u = _require_positive(u)
        pair = self.lax_pair(u)
        L_dot = np.einsum("m,mij->ij", self.km_rhs(u), self.lax_l_partials(u))
        commutator = pair.B @ pair.L - pair.L @ pair.B
        return float(np.max(np.abs(L_dot - commutator)))

    def invariants(self, u: np.ndarray, kmax: int) -> np.ndarray:
        """(H_1, ..., H_kmax) with H_k = Tr(L^k)/k"""
        if kmax < 1:
            raise InvalidDimensionError(f"kmax must be >= 1, got {kmax}")
        L = self.lax_l(u)
        values = []
        power = np.eye(len(L))
        for k in range(1, kmax + 1):
            power = power @ L
            values.append(np.trace(power) / k)
        return np.array(values)

    def invariant_gradients(self, u: np.ndarray, kmax: int) -> np.ndarray:
        """Row k-1 is the gradient of H_k: dH_k/du_m = Tr(L^{k-1} dL/du_m)"""
        if kmax < 1:
            raise InvalidDimensionError(f"kmax must be >= 1, got {kmax}")
        L = self.lax_l(u)
        dL = self.lax_l_partials(u)
        grads = []
        power = np.eye(len(L))
        for _ in range(kmax):
            grads.append(np.einsum("ij,mji->m", power, dL))
            power = power @ L
        return np.array(grads)

    def invariant_field(self, k: int, N: int) -> ScalarField:
        """H_k as a scalar field on u-space, with its analytic gradient"""
        return ScalarField(
            dim=N,
            eval=lambda u: float(self.invariants(u, k)[k - 1]),
            gradient=lambda u: self.invariant_gradients(u, k)[k - 1],
            label=f"H{k}",
        )

    def spectrum(self, u: np.ndarray, solver: Optional[str] = None) -> np.ndarray:
        """Eigenvalues of L in ascending order"""
        L = self.lax_l(u)
        solver = solver or settings.eigensolver
        if solver == "jacobi":
            return self.jacobi_eigenvalues(L)
        return np.sort(np.linalg.eigvalsh(L))

    def jacobi_eigenvalues(self, A: np.ndarray, max_sweeps: Optional[int] = None,
                           threshold: Optional[float] = None) -> np.ndarray:
        """
        Cyclic Jacobi rotations for a small dense symmetric matrix.

        Sweeps stop once the off-diagonal Frobenius norm drops below
        threshold * ||A||_F.
        """
        A = np.array(A, dtype=float)
        if not np.allclose(A, A.T, rtol=0.0, atol=1e-14 * max(1.0, np.max(np.abs(A), initial=0.0))):
            raise DomainError("Jacobi eigenvalue solver needs a symmetric matrix")
        max_sweeps = max_sweeps or settings.jacobi_max_sweeps
        threshold = threshold if threshold is not None else settings.jacobi_threshold
        size = len(A)
        fro = np.linalg.norm(A)
        if fro == 0.0:
            return np.zeros(size)

        for sweep in range(max_sweeps):
            off = np.linalg.norm(A - np.diag(np.diag(A)))
            if off <= threshold * fro:
                break
            for p in range(size - 1):
                for q in range(p + 1, size):
                    if A[p, q] == 0.0:
                        continue
                    theta = (A[q, q] - A[p, p]) / (2.0 * A[p, q])
                    sign = 1.0 if theta >= 0 else -1.0
                    t = sign / (abs(theta) + np.sqrt(theta * theta + 1.0))
                    c = 1.0 / np.sqrt(t * t + 1.0)
                    s = t * c
                    col_p = A[:, p].copy()
                    col_q = A[:, q].copy()
                    A[:, p] = c * col_p - s * col_q
                    A[:, q] = s * col_p + c * col_q
                    row_p = A[p, :].copy()
                    row_q = A[q, :].copy()
                    A[p, :] = c * row_p - s * row_q
                    A[q, :] = s * row_p + c * row_q
                    A[p, q] = A[q, p] = 0.0
        else:
            logger.warning(f"Jacobi eigenvalue solver hit the sweep cap ({max_sweeps})")
        return np.sort(np.diag(A))

    def newton_residuals(self, u: np.ndarray, kmax: int = 4) -> List[float]:
        """|sum(lambda^k) - k H_k| / max(1, |k H_k|) for k = 1..kmax"""
        eigenvalues = self.spectrum(u)
        H = self.invariants(u, kmax)
        residuals = []
        for k in range(1, kmax + 1):
            power_sum = float(np.sum(eigenvalues ** k))
            target = k * H[k - 1]
            residuals.append(abs(power_sum - target) / max(1.0, abs(target)))
        return residuals


lax_analyzer = LaxAnalyzer()
