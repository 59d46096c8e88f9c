"""
Poisson tensors of the KM lattice and generic bivector calculus.

pi2 and pi3 live on u-space; J2 and J3 on the lifted phase space. Every
entry of J3 is a constant combination of the exponentials w_k, so J3 is
stored as a coefficient tensor T with J3(x) = T w(x) and exact partials
d_c J3 = sum_k T[..., k] w_k G[k, c].
"""
import itertools
import logging
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from app.core.calculus import BivectorField, ScalarField, VectorFieldHandle, constant_bivector, inf_norm
from app.core.config import settings
from app.core.errors import DimensionMismatchError
from app.core.state import PointLike, as_phase_array, dims, dims_from_phase, log_gradients, w_vector
from app.models.schemas import DiscrepancyEntry
from app.services.maps import coordinate_maps
from app.services.symmetries import symmetry_fields

logger = logging.getLogger(__name__)


def coordinate_label(N: int, a: int) -> str:
    """Name of flat phase coordinate a, e.g. q1 or p3"""
    return f"q{a + 1}" if a < N else f"p{a - N + 1}"


@lru_cache(maxsize=None)
def _j2_matrix(N: int) -> np.ndarray:
    J = np.zeros((2 * N, 2 * N))
    J[:N, N:] = np.eye(N)
    J[N:, :N] = -np.eye(N)
    J.setflags(write=False)
    return J


@lru_cache(maxsize=None)
def _closed_bracket_tensor(n: int) -> np.ndarray:
    """
    Coefficient tensor of the transcribed J3 bracket list.

    Each rule is applied on exactly its stated index range; exponentials
    with index outside 1..2n-1 are dropped.
    """
    N = dims(n).N
    T = np.zeros((2 * N, 2 * N, N))
    filled = set()

    def q(i):
        return i - 1

    def p(i):
        return N + i - 1

    def put(a, b, terms):
        if (a, b) in filled:
            logger.warning(f"J3 bracket rule sets {coordinate_label(N, a)},{coordinate_label(N, b)} twice")
        filled.add((a, b))
        for k, coeff in terms:
            if 1 <= k <= N:
                T[a, b, k - 1] += coeff
                T[b, a, k - 1] -= coeff

    for i in range(1, N + 1):
        for j in range(i + 1, N + 1):
            put(q(i), q(j), [(j, 1.0)])
    put(q(1), p(1), [(1, 1.0), (2, 0.5)])
    for i in range(2, N + 1):
        put(q(i), p(i), [(i, 0.5), (i + 1, 0.5)])
    for i in range(1, N):
        put(q(i), p(i + 1), [(i + 2, 0.5)])
    if N >= 2:
        put(q(2), p(1), [(2, 1.0)])
    for i in range(3, N + 1):
        put(q(i), p(i - 1), [(i, 0.5)])
    for i in range(1, N + 1):
        for j in range(i + 2, N + 1):
            put(q(i), p(j), [(j - 1, -0.5), (j + 1, 0.5)])
    for i in range(3, N + 1):
        put(q(i), p(1), [(i, 0.5)])
    if N >= 2:
        put(p(1), p(2), [(1, 0.5), (2, 0.25), (3, -0.25)])
    for i in range(2, N):
        put(p(i), p(i + 1), [(i, 0.25), (i + 1, 0.25)])
    if N >= 3:
        put(p(1), p(3), [(2, 0.5), (4, -0.25)])
    for i in range(2, N - 1):
        put(p(i), p(i + 2), [(i + 1, 0.25)])
    for j in range(4, N + 1):
        put(p(1), p(j), [(j + 1, -0.25), (j - 1, 0.25)])
    T.setflags(write=False)
    return T


@lru_cache(maxsize=None)
def _generated_bracket_tensor(n: int) -> np.ndarray:
    """
    Coefficient tensor of DX1 J2 + J2 DX1^T.

    With X1 = K w and dw_k = w_k g_k, slice k is
    K[:, k] (J2^T g_k)^T + (J2 g_k) K[:, k]^T.
    """
    dim = dims(n)
    K = symmetry_fields.x1_coefficients(n)
    G = log_gradients(dim.N)
    J2 = _j2_matrix(dim.N)
    T = np.zeros((dim.M, dim.M, dim.N))
    for k in range(dim.N):
        T[:, :, k] = np.outer(K[:, k], J2.T @ G[k]) + np.outer(J2 @ G[k], K[:, k])
    T.setflags(write=False)
    return T


def _tensor_eval(T: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.einsum("abk,k->ab", T, w_vector(x))


def _tensor_partials(T: np.ndarray, x: np.ndarray) -> np.ndarray:
    N = T.shape[2]
    return np.einsum("abk,k,kc->abc", T, w_vector(x), log_gradients(N))


class PoissonTensors:
    """Quadratic and cubic brackets, their symplectic lifts, and bivector calculus"""

    # u-space brackets

    def pi2(self, u: np.ndarray) -> np.ndarray:
        """{u_i, u_{i+1}} = u_i u_{i+1}"""
        u = np.asarray(u, dtype=float)
        upper = np.diag(u[:-1] * u[1:], 1)
        return upper - upper.T

    def pi2_partials(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        N = len(u)
        D = np.zeros((N, N, N))
        for k in range(N - 1):
            D[k, k + 1, k] = u[k + 1]
            D[k, k + 1, k + 1] = u[k]
        return D - D.transpose(1, 0, 2)

    def pi3(self, u: np.ndarray) -> np.ndarray:
        """{u_i, u_{i+1}} = u_i u_{i+1}(u_i + u_{i+1}), {u_i, u_{i+2}} = u_i u_{i+1} u_{i+2}"""
        u = np.asarray(u, dtype=float)
        upper = np.diag(u[:-1] * u[1:] * (u[:-1] + u[1:]), 1)
        if len(u) > 2:
            upper += np.diag(u[:-2] * u[1:-1] * u[2:], 2)
        return upper - upper.T

    def pi3_partials(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        N = len(u)
        D = np.zeros((N, N, N))
        for k in range(N - 1):
            a, b = u[k], u[k + 1]
            D[k, k + 1, k] = 2.0 * a * b + b * b
            D[k, k + 1, k + 1] = a * a + 2.0 * a * b
        for k in range(N - 2):
            a, b, c = u[k], u[k + 1], u[k + 2]
            D[k, k + 2, k] = b * c
            D[k, k + 2, k + 1] = a * c
            D[k, k + 2, k + 2] = a * b
        return D - D.transpose(1, 0, 2)

    def pi2_field(self, N: int) -> BivectorField:
        return BivectorField(dim=N, eval=self.pi2, partials=self.pi2_partials, label="pi2")

    def pi3_field(self, N: int) -> BivectorField:
        return BivectorField(dim=N, eval=self.pi3, partials=self.pi3_partials, label="pi3")

    # phase-space brackets

    def j2(self, n: int) -> np.ndarray:
        """Canonical [[0, I], [-I, 0]] in (q, p) ordering"""
        return np.array(_j2_matrix(dims(n).N))

    def j3_closed(self, x: PointLike) -> np.ndarray:
        arr = as_phase_array(x)
        return _tensor_eval(_closed_bracket_tensor(dims_from_phase(arr).n), arr)

    def j3_closed_partials(self, x: PointLike) -> np.ndarray:
        arr = as_phase_array(x)
        return _tensor_partials(_closed_bracket_tensor(dims_from_phase(arr).n), arr)

    def j3_oracle(self, x: PointLike) -> np.ndarray:
        """
        Cubic lift generated by the master symmetry: DX1 J2 + J2 DX1^T.

        This is -(L_{X1} J2) in the bivector Lie-derivative convention used
        here; the orientation matches the bracket list and pushes forward
        to +pi3.
        """
        arr = as_phase_array(x)
        return _tensor_eval(_generated_bracket_tensor(dims_from_phase(arr).n), arr)

    def j3_oracle_partials(self, x: PointLike) -> np.ndarray:
        arr = as_phase_array(x)
        return _tensor_partials(_generated_bracket_tensor(dims_from_phase(arr).n), arr)

    def j2_field(self, n: int) -> BivectorField:
        return constant_bivector(_j2_matrix(dims(n).N), label="J2")

    def j3_field(self, n: int) -> BivectorField:
        return BivectorField(dim=dims(n).M, eval=self.j3_oracle, partials=self.j3_oracle_partials, label="J3")

    def j3_closed_field(self, n: int) -> BivectorField:
        return BivectorField(dim=dims(n).M, eval=self.j3_closed, partials=self.j3_closed_partials,
                             label="J3[closed]")

    # calculus

    def ham_vf(self, pi: BivectorField, grad: Callable[[np.ndarray], np.ndarray], x: np.ndarray) -> np.ndarray:
        """pi(x) grad(x); no sign flip"""
        x = np.asarray(x, dtype=float)
        g = np.asarray(grad(x), dtype=float)
        if g.shape != (pi.dim,):
            raise DimensionMismatchError(f"gradient of length {g.shape} for a {pi.dim}-dimensional bivector")
        return pi(x) @ g

    def bracket(self, f: ScalarField, g: ScalarField, pi: BivectorField, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(f.grad_at(x) @ pi(x) @ g.grad_at(x))

    def _triples(self, dim: int) -> List[Tuple[int, int, int]]:
        triples = list(itertools.combinations(range(dim), 3))
        if dim <= settings.jacobi_full_dim or len(triples) <= settings.jacobi_triple_limit:
            return triples
        rng = np.random.default_rng(settings.jacobi_triple_seed)
        picked = np.sort(rng.choice(len(triples), size=settings.jacobi_triple_limit, replace=False))
        return [triples[k] for k in picked]

    def jacobi_terms(self, P: np.ndarray, D: np.ndarray) -> np.ndarray:
        """Cyclic sum S[a,b,c] = sum_d pi^{ad} d_d pi^{bc} + cyclic"""
        T = np.einsum("ad,bcd->abc", P, D)
        return T + T.transpose(1, 2, 0) + T.transpose(2, 0, 1)

    def jacobi_residual(self, pi: BivectorField, x: np.ndarray, relative: bool = False) -> float:
        """
        Largest cyclic Jacobi sum over index triples a < b < c.

        With `relative`, the sum is divided by max(1, ||pi||_inf ||d pi||_inf).
        """
        if pi.dim < 3:
            return 0.0
        x = np.asarray(x, dtype=float)
        P = pi(x)
        D = pi.partials_at(x)
        S = self.jacobi_terms(P, D)
        a, b, c = (np.array(idx) for idx in zip(*self._triples(pi.dim)))
        residual = float(np.max(np.abs(S[a, b, c])))
        if relative:
            residual /= max(1.0, inf_norm(P) * inf_norm(D))
        return residual

    def compatibility_residual(self, pi_a: BivectorField, pi_b: BivectorField, x: np.ndarray,
                               relative: bool = False) -> float:
        return self.jacobi_residual(pi_a + pi_b, x, relative=relative)

    def pushforward(self, x: PointLike, J: BivectorField) -> np.ndarray:
        """DPsi J DPsi^T at x"""
        arr = as_phase_array(x)
        D = coordinate_maps.volterra_jacobian(arr)
        return D @ J(arr) @ D.T

    def pushforward_residual(self, x: PointLike, J: BivectorField, pi_target: BivectorField) -> float:
        arr = as_phase_array(x)
        if J.dim != len(arr) or pi_target.dim != len(arr) // 2:
            raise DimensionMismatchError("pushforward needs a phase-space J and a u-space target")
        image = self.pushforward(arr, J)
        return float(np.max(np.abs(image - pi_target(coordinate_maps.volterra_map(arr)))))

    def lie_derivative_bivector(self, X: VectorFieldHandle, pi: BivectorField, x: np.ndarray) -> np.ndarray:
        """(L_X pi)^{ab} = X^c d_c pi^{ab} - pi^{cb} d_c X^a - pi^{ac} d_c X^b"""
        x = np.asarray(x, dtype=float)
        if X.dim != pi.dim:
            raise DimensionMismatchError(f"field of dimension {X.dim} against bivector of dimension {pi.dim}")
        P = pi(x)
        DX = X.jacobian_at(x)
        return np.einsum("c,abc->ab", X(x), pi.partials_at(x)) - DX @ P - P @ DX.T

    def j3_discrepancies(self, n: int, points: Sequence[np.ndarray],
                         tolerance: Optional[float] = None) -> List[DiscrepancyEntry]:
        """
        Entries where the transcribed bracket list and the generated J3 differ.

        Reported from the upper triangle, in row-major order.
        """
        tolerance = tolerance if tolerance is not None else settings.tolerance("j3_discrepancy")
        N = dims(n).N
        worst = np.zeros((2 * N, 2 * N))
        for x in points:
            worst = np.maximum(worst, np.abs(self.j3_closed(x) - self.j3_oracle(x)))
        entries = []
        for a, b in zip(*np.triu_indices(2 * N, k=1)):
            if worst[a, b] > tolerance:
                entries.append(DiscrepancyEntry(
                    row=coordinate_label(N, a),
                    col=coordinate_label(N, b),
                    max_abs_difference=float(worst[a, b]),
                ))
        if entries:
            logger.warning(f"J3 bracket list differs from the generated tensor in {len(entries)} entries (n={n})")
        return entries


poisson_tensors = PoissonTensors()
