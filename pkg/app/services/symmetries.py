import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import List

import numpy as np

from app.core.calculus import ScalarField, VectorFieldHandle, fit_scalar
from app.core.state import PointLike, as_phase_array, dims, dims_from_phase, log_gradients, w_vector
from app.models.schemas import CoefficientFit

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CMatrix:
    """
    Integer matrix c_{i,j}: 0 above the diagonal, -1 below, i-1 on it.

    `padded` adds the zero columns c_{j,0} and c_{j,2n}, so column index
    equals the 1-based j.
    """
    entries: np.ndarray

    @property
    def padded(self) -> np.ndarray:
        N = len(self.entries)
        out = np.zeros((N, N + 2), dtype=int)
        out[:, 1:N + 1] = self.entries
        return out

    def c(self, i: int, j: int) -> int:
        """c_{i,j} with 1-based i and zero columns at j = 0 and j = 2n"""
        return int(self.padded[i - 1, j])


class SymmetryFields:
    """Euler and master symmetries in u-space, X0 and X1 in phase space"""

    def c_matrix(self, n: int) -> CMatrix:
        N = dims(n).N
        entries = -np.tril(np.ones((N, N), dtype=int), k=-1)
        entries[np.diag_indices(N)] = np.arange(N)
        return CMatrix(entries=entries)

    # u-space

    def euler_y0(self, u: np.ndarray) -> np.ndarray:
        return np.array(u, dtype=float)

    def master_y1(self, u: np.ndarray) -> np.ndarray:
        """U_i = (i+1) u_i u_{i+1} + u_i^2 + (2-i) u_{i-1} u_i"""
        u = np.asarray(u, dtype=float)
        N = len(u)
        padded = np.concatenate(([0.0], u, [0.0]))
        i = np.arange(1, N + 1)
        return (i + 1) * u * padded[2:] + u ** 2 + (2 - i) * padded[:-2] * u

    def master_y1_jacobian(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        N = len(u)
        padded = np.concatenate(([0.0], u, [0.0]))
        jac = np.zeros((N, N))
        for k in range(N):
            i = k + 1
            jac[k, k] = (i + 1) * padded[k + 2] + 2.0 * u[k] + (2 - i) * padded[k]
            if k + 1 < N:
                jac[k, k + 1] = (i + 1) * u[k]
            if k - 1 >= 0:
                jac[k, k - 1] = (2 - i) * u[k]
        return jac

    def y0_field(self, N: int) -> VectorFieldHandle:
        return VectorFieldHandle(dim=N, eval=self.euler_y0, jacobian=lambda u: np.eye(N), label="Y0")

    def y1_field(self, N: int) -> VectorFieldHandle:
        return VectorFieldHandle(dim=N, eval=self.master_y1, jacobian=self.master_y1_jacobian, label="Y1")

    # phase space

    def x0(self, x: PointLike) -> np.ndarray:
        """Sum of d/dp_i"""
        N = dims_from_phase(as_phase_array(x)).N
        return np.concatenate([np.zeros(N), np.ones(N)])

    @lru_cache(maxsize=None)
    def x1_coefficients(self, n: int) -> np.ndarray:
        """
        Constant M x N matrix K with X1(x) = K w(x).

        Rows 0..N-1 are the q-components A_i, rows N..M-1 the p-components B_i.
        """
        N = dims(n).N
        C = self.c_matrix(n)
        cpad = C.padded
        K = np.zeros((2 * N, N))
        K[:N, :] = C.entries.T
        for i in range(1, N + 1):
            row = N + i - 1
            if i + 1 <= N:
                K[row, i] += i + 1
            K[row, i - 1] += 1.0
            if i - 1 >= 1:
                K[row, i - 2] += 2 - i
            K[row, :] += 0.5 * (cpad[:, i - 1] - cpad[:, i + 1])
        K.setflags(write=False)
        return K

    def x1(self, x: PointLike) -> np.ndarray:
        arr = as_phase_array(x)
        n = dims_from_phase(arr).n
        return self.x1_coefficients(n) @ w_vector(arr)

    def x1_jacobian(self, x: PointLike) -> np.ndarray:
        """Every term of X1 is a constant times one w, so DX1 = K diag(w) G"""
        arr = as_phase_array(x)
        dim = dims_from_phase(arr)
        return self.x1_coefficients(dim.n) @ (w_vector(arr)[:, None] * log_gradients(dim.N))

    def x0_field(self, M: int) -> VectorFieldHandle:
        return VectorFieldHandle(dim=M, eval=self.x0, jacobian=lambda x: np.zeros((M, M)), label="X0")

    def x1_field(self, n: int) -> VectorFieldHandle:
        return VectorFieldHandle(dim=dims(n).M, eval=self.x1, jacobian=self.x1_jacobian, label="X1")

    # vector-field calculus

    def vf_lie_bracket(self, X: VectorFieldHandle, Y: VectorFieldHandle, x: np.ndarray) -> np.ndarray:
        """[X, Y](x) = DY(x) X(x) - DX(x) Y(x)"""
        x = np.asarray(x, dtype=float)
        return Y.jacobian_at(x) @ X(x) - X.jacobian_at(x) @ Y(x)

    def bracket_field(self, X: VectorFieldHandle, Y: VectorFieldHandle) -> VectorFieldHandle:
        """[X, Y] as a field of its own; its Jacobian comes from finite differences"""
        return VectorFieldHandle(
            dim=X.dim,
            eval=lambda x: self.vf_lie_bracket(X, Y, x),
            label=f"[{X.label},{Y.label}]",
        )

    def vf_apply_scalar(self, X: VectorFieldHandle, f: ScalarField, x: np.ndarray) -> float:
        """X(f) at x"""
        x = np.asarray(x, dtype=float)
        return float(X(x) @ f.grad_at(x))

    def euler_master_bracket_fit(self, points: List[np.ndarray]) -> CoefficientFit:
        """Fit [Y0, Y1] = c Y1 over u-space points; Y1 is homogeneous of degree two"""
        N = len(points[0])
        y0, y1 = self.y0_field(N), self.y1_field(N)
        targets = [self.vf_lie_bracket(y0, y1, u) for u in points]
        references = [y1(u) for u in points]
        fit = fit_scalar(targets, references)
        logger.info(f"[Y0, Y1] = {fit.coefficient:.12g} Y1 over {len(points)} points")
        return CoefficientFit(
            relation="commutator",
            i=0,
            j=1,
            measured=fit.coefficient,
            predicted=1.0,
            relative_residual=fit.relative_residual,
            scalarity_spread=fit.spread,
            points=len(points),
            field="u-space",
        )


symmetry_fields = SymmetryFields()
