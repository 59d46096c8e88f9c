"""
Recursion operator, higher tensors and flows, lifted Hamiltonians and the
master-symmetry hierarchy, plus fitted deformation coefficients.

Derivatives of R^k-products are propagated with the product rule from the
exact partials of J3; finite differences are only used for brackets of
composite fields whose Jacobians are not tracked.
"""
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.calculus import (
    BivectorField, ScalarField, VectorFieldHandle, fit_scalar, inf_norm, relative_inf,
)
from app.core.errors import InvalidDimensionError
from app.core.state import PhasePoint, PointLike, as_phase_array, dims, dims_from_phase, log_gradients, w_vector
from app.models.schemas import CoefficientFit, ConformalFit
from app.services.lax import lax_analyzer
from app.services.maps import coordinate_maps
from app.services.poisson import poisson_tensors
from app.services.symmetries import symmetry_fields

logger = logging.getLogger(__name__)


class HierarchyBuilder:
    """Objects generated by R = J3 J2^{-1} from J2, X0 and the first flow"""

    # recursion operator and tensors

    def recursion(self, x: PointLike) -> np.ndarray:
        """R = J3 (-J2), using J2^{-1} = -J2"""
        arr = as_phase_array(x)
        J2 = poisson_tensors.j2(dims_from_phase(arr).n)
        return poisson_tensors.j3_oracle(arr) @ (-J2)

    def recursion_partials(self, x: PointLike) -> np.ndarray:
        arr = as_phase_array(x)
        J2 = poisson_tensors.j2(dims_from_phase(arr).n)
        return np.einsum("abc,bd->adc", poisson_tensors.j3_oracle_partials(arr), -J2)

    def _tensor_chain(self, k: int, x: np.ndarray, with_partials: bool) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        if k < 2:
            raise InvalidDimensionError(f"J_k needs k >= 2 (no negative recursion operator), got {k}")
        arr = as_phase_array(x)
        M = len(arr)
        J = poisson_tensors.j2(dims_from_phase(arr).n)
        D = np.zeros((M, M, M)) if with_partials else None
        if k == 2:
            return J, D
        R = self.recursion(arr)
        dR = self.recursion_partials(arr) if with_partials else None
        for _ in range(k - 2):
            if with_partials:
                D = np.einsum("abc,bd->adc", dR, J) + np.einsum("ab,bdc->adc", R, D)
            J = R @ J
        return J, D

    def tensor_j(self, k: int, x: PointLike) -> np.ndarray:
        """J_k = R^{k-2} J2"""
        return self._tensor_chain(k, x, with_partials=False)[0]

    def tensor_j_partials(self, k: int, x: PointLike) -> np.ndarray:
        return self._tensor_chain(k, x, with_partials=True)[1]

    def tensor_field(self, k: int, n: int) -> BivectorField:
        if k == 2:
            return poisson_tensors.j2_field(n)
        if k == 3:
            return poisson_tensors.j3_field(n)
        return BivectorField(
            dim=dims(n).M,
            eval=lambda x: self.tensor_j(k, x),
            partials=lambda x: self.tensor_j_partials(k, x),
            label=f"J{k}",
        )

    # Hamiltonians

    def h_k(self, k: int, x: PointLike) -> float:
        """h_k = H_k(Psi(x)) / 2, so h_1 = sum of the w_i"""
        if k < 1:
            raise InvalidDimensionError(f"h_k needs k >= 1, got {k}")
        u = coordinate_maps.volterra_map(x)
        return 0.5 * float(lax_analyzer.invariants(u, k)[k - 1])

    def grad_h(self, k: int, x: PointLike) -> np.ndarray:
        """Chain rule through the Volterra map: DPsi^T grad H_k / 2"""
        if k < 1:
            raise InvalidDimensionError(f"h_k needs k >= 1, got {k}")
        arr = as_phase_array(x)
        u = coordinate_maps.volterra_map(arr)
        grad_H = lax_analyzer.invariant_gradients(u, k)[k - 1]
        return 0.5 * coordinate_maps.volterra_jacobian(arr).T @ grad_H

    def hessian_h1(self, x: PointLike) -> np.ndarray:
        arr = as_phase_array(x)
        G = log_gradients(dims_from_phase(arr).N)
        return G.T @ (w_vector(arr)[:, None] * G)

    def hamiltonian(self, k: int, n: int) -> ScalarField:
        return ScalarField(
            dim=dims(n).M,
            eval=lambda x: self.h_k(k, x),
            gradient=lambda x: self.grad_h(k, x),
            label=f"h{k}",
        )

    # vector-field chains

    def _field_chain(self, power: int, x: np.ndarray, v: np.ndarray, Dv: np.ndarray,
                     with_jacobian: bool) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        """Apply R `power` times to v, propagating the Jacobian alongside"""
        if power == 0:
            return v, Dv if with_jacobian else None
        R = self.recursion(x)
        dR = self.recursion_partials(x) if with_jacobian else None
        for _ in range(power):
            if with_jacobian:
                Dv = np.einsum("abc,b->ac", dR, v) + R @ Dv
            v = R @ v
        return v, Dv if with_jacobian else None

    def _first_flow(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        N = dims_from_phase(x).N
        J2 = poisson_tensors.j2(dims_from_phase(x).n)
        G = log_gradients(N)
        v = J2 @ (G.T @ w_vector(x))
        return v, J2 @ self.hessian_h1(x)

    def flow(self, k: int, x: PointLike) -> np.ndarray:
        """X_k = R^{k-1} J2 grad h_1"""
        if k < 1:
            raise InvalidDimensionError(f"flows start at k = 1, got {k}")
        arr = as_phase_array(x)
        v, Dv = self._first_flow(arr)
        return self._field_chain(k - 1, arr, v, Dv, with_jacobian=False)[0]

    def flow_jacobian(self, k: int, x: PointLike) -> np.ndarray:
        if k < 1:
            raise InvalidDimensionError(f"flows start at k = 1, got {k}")
        arr = as_phase_array(x)
        v, Dv = self._first_flow(arr)
        return self._field_chain(k - 1, arr, v, Dv, with_jacobian=True)[1]

    def flow_field(self, k: int, n: int) -> VectorFieldHandle:
        return VectorFieldHandle(
            dim=dims(n).M,
            eval=lambda x: self.flow(k, x),
            jacobian=lambda x: self.flow_jacobian(k, x),
            label=f"flow{k}",
        )

    def master_x(self, k: int, x: PointLike) -> np.ndarray:
        """X_k = R^k X0"""
        if k < 0:
            raise InvalidDimensionError(f"master symmetries start at k = 0, got {k}")
        arr = as_phase_array(x)
        M = len(arr)
        return self._field_chain(k, arr, symmetry_fields.x0(arr), np.zeros((M, M)), with_jacobian=False)[0]

    def master_x_jacobian(self, k: int, x: PointLike) -> np.ndarray:
        if k < 0:
            raise InvalidDimensionError(f"master symmetries start at k = 0, got {k}")
        arr = as_phase_array(x)
        M = len(arr)
        return self._field_chain(k, arr, symmetry_fields.x0(arr), np.zeros((M, M)), with_jacobian=True)[1]

    def master_field(self, k: int, n: int) -> VectorFieldHandle:
        if k == 0:
            return symmetry_fields.x0_field(dims(n).M)
        return VectorFieldHandle(
            dim=dims(n).M,
            eval=lambda x: self.master_x(k, x),
            jacobian=lambda x: self.master_x_jacobian(k, x),
            label=f"X{k}",
        )

    def _master_or_explicit(self, i: int, n: int, field: str) -> VectorFieldHandle:
        if field == "explicit":
            if i != 1:
                raise InvalidDimensionError("the explicit master symmetry exists only for i = 1")
            return symmetry_fields.x1_field(n)
        if field != "master":
            raise InvalidDimensionError(f"unknown master field source: {field}")
        return self.master_field(i, n)

    # Lenard chains and bi-Hamiltonian identities

    def lenard_residual_u(self, i: int, u: np.ndarray, relative: bool = False) -> float:
        """||pi3 grad H_i - pi2 grad H_{i+1}||_inf"""
        if i < 1:
            raise InvalidDimensionError(f"Lenard index must be >= 1, got {i}")
        u = np.asarray(u, dtype=float)
        grads = lax_analyzer.invariant_gradients(u, i + 1)
        lhs = poisson_tensors.pi3(u) @ grads[i - 1]
        rhs = poisson_tensors.pi2(u) @ grads[i]
        return relative_inf(lhs - rhs, rhs) if relative else inf_norm(lhs - rhs)

    def lenard_residual_phase(self, i: int, x: PointLike, relative: bool = False) -> float:
        """||R J2 grad h_i - J2 grad h_{i+1}||_inf"""
        if i < 1:
            raise InvalidDimensionError(f"Lenard index must be >= 1, got {i}")
        arr = as_phase_array(x)
        J2 = poisson_tensors.j2(dims_from_phase(arr).n)
        lhs = self.recursion(arr) @ J2 @ self.grad_h(i, arr)
        rhs = J2 @ self.grad_h(i + 1, arr)
        return relative_inf(lhs - rhs, rhs) if relative else inf_norm(lhs - rhs)

    def bihamiltonian_residual(self, x: PointLike, relative: bool = False) -> float:
        """||J2 grad h2 - J3 grad h1||_inf"""
        arr = as_phase_array(x)
        J2 = poisson_tensors.j2(dims_from_phase(arr).n)
        lhs = J2 @ self.grad_h(2, arr)
        rhs = poisson_tensors.j3_oracle(arr) @ self.grad_h(1, arr)
        return relative_inf(lhs - rhs, lhs) if relative else inf_norm(lhs - rhs)

    def multi_hamiltonian_residual(self, m: int, j: int, x: PointLike, relative: bool = False) -> float:
        """||J_m grad h_j - J2 grad h_{m+j-2}||_inf"""
        if m < 2 or j < 1 or m + j - 2 < 1:
            raise InvalidDimensionError(f"invalid multi-Hamiltonian pair (m={m}, j={j})")
        arr = as_phase_array(x)
        J2 = poisson_tensors.j2(dims_from_phase(arr).n)
        lhs = self.tensor_j(m, arr) @ self.grad_h(j, arr)
        rhs = J2 @ self.grad_h(m + j - 2, arr)
        return relative_inf(lhs - rhs, rhs) if relative else inf_norm(lhs - rhs)

    # conformal symmetry and deformation coefficients

    def conformal_constants(self, points: Sequence[PointLike]) -> ConformalFit:
        """Fit L_{X0} J2 = lambda J2, L_{X0} J3 = mu J3 and X0(h1) = nu h1"""
        if len(points) < 2:
            raise InvalidDimensionError("conformal fit needs at least two points")
        arrays = [as_phase_array(x) for x in points]
        n = dims_from_phase(arrays[0]).n
        X0 = symmetry_fields.x0_field(dims(n).M)
        J2, J3 = poisson_tensors.j2_field(n), poisson_tensors.j3_field(n)
        h1 = self.hamiltonian(1, n)

        lam_targets = [poisson_tensors.lie_derivative_bivector(X0, J2, x) for x in arrays]
        lam = fit_scalar(lam_targets, [J2(x) for x in arrays])
        mu = fit_scalar([poisson_tensors.lie_derivative_bivector(X0, J3, x) for x in arrays],
                        [J3(x) for x in arrays])
        nu = fit_scalar([symmetry_fields.vf_apply_scalar(X0, h1, x) for x in arrays],
                        [h1(x) for x in arrays])
        lambda_exact_zero = all(not np.any(t) for t in lam_targets)
        logger.info(f"Conformal constants: lambda={lam.coefficient:.3g} mu={mu.coefficient:.12g} nu={nu.coefficient:.12g}")
        return ConformalFit(
            lambda_=0.0 if lambda_exact_zero else lam.coefficient,
            mu=mu.coefficient,
            nu=nu.coefficient,
            residuals={
                "lambda": lam.relative_residual,
                "mu": mu.relative_residual,
                "nu": nu.relative_residual,
            },
            lambda_exact_zero=lambda_exact_zero,
            points=len(arrays),
        )

    def _fit(self, relation: str, i: int, j: int, predicted: float, targets: List, references: List,
             field: str) -> CoefficientFit:
        fit = fit_scalar(targets, references)
        result = CoefficientFit(
            relation=relation,
            i=i,
            j=j,
            measured=fit.coefficient,
            predicted=predicted,
            relative_residual=fit.relative_residual,
            scalarity_spread=fit.spread,
            points=len(targets),
            field=field,
        )
        logger.info(f"{relation} ({i},{j}) [{field}]: measured {result.measured:.10g}, predicted {predicted:g}")
        if result.scalarity_spread >= 1e-6:
            logger.warning(f"{relation} ({i},{j}) is not a scalar relation (spread {result.scalarity_spread:.2e})")
        return result

    def deformation_coeff(self, i: int, j: int, points: Sequence[PointLike], field: str = "master") -> CoefficientFit:
        """Fit L_{X_i} J_j = c J_{i+j}; the closed-form prediction is j - i - 2"""
        if i < 0 or j < 2:
            raise InvalidDimensionError(f"deformation needs i >= 0 and j >= 2, got ({i}, {j})")
        arrays = [as_phase_array(x) for x in points]
        n = dims_from_phase(arrays[0]).n
        X = self._master_or_explicit(i, n, field)
        J = self.tensor_field(j, n)
        targets = [poisson_tensors.lie_derivative_bivector(X, J, x) for x in arrays]
        references = [self.tensor_j(i + j, x) for x in arrays]
        return self._fit("tensor", i, j, float(j - i - 2), targets, references, field)

    def ham_deformation_check(self, i: int, j: int, points: Sequence[PointLike], field: str = "master") -> CoefficientFit:
        """Fit X_i(h_j) = c h_{i+j}; predicted i + j"""
        if i < 0 or j < 1:
            raise InvalidDimensionError(f"Hamiltonian deformation needs i >= 0 and j >= 1, got ({i}, {j})")
        arrays = [as_phase_array(x) for x in points]
        n = dims_from_phase(arrays[0]).n
        X = self._master_or_explicit(i, n, field)
        h = self.hamiltonian(j, n)
        targets = [symmetry_fields.vf_apply_scalar(X, h, x) for x in arrays]
        references = [self.h_k(i + j, x) for x in arrays]
        return self._fit("hamiltonian", i, j, float(i + j), targets, references, field)

    def master_commutator_check(self, i: int, j: int, points: Sequence[PointLike]) -> CoefficientFit:
        """Fit [X_i, X_j] = c X_{i+j}; predicted j - i"""
        if i < 0 or j < i:
            raise InvalidDimensionError(f"commutator check needs 0 <= i <= j, got ({i}, {j})")
        arrays = [as_phase_array(x) for x in points]
        n = dims_from_phase(arrays[0]).n
        Xi, Xj = self.master_field(i, n), self.master_field(j, n)
        targets = [symmetry_fields.vf_lie_bracket(Xi, Xj, x) for x in arrays]
        references = [self.master_x(i + j, x) for x in arrays]
        return self._fit("commutator", i, j, float(j - i), targets, references, "master")

    # commuting flows and involutivity

    def flow_commutator_residual(self, i: int, j: int, x: PointLike) -> float:
        """||[X_i, X_j]||_inf / max(1, ||X_i|| ||X_j||)"""
        arr = as_phase_array(x)
        n = dims_from_phase(arr).n
        Fi, Fj = self.flow_field(i, n), self.flow_field(j, n)
        bracket = symmetry_fields.vf_lie_bracket(Fi, Fj, arr)
        return inf_norm(bracket) / max(1.0, inf_norm(Fi(arr)) * inf_norm(Fj(arr)))

    def involutivity_residual(self, i: int, j: int, k: int, x: PointLike) -> float:
        """|grad h_i^T J_k grad h_j|"""
        arr = as_phase_array(x)
        return abs(float(self.grad_h(i, arr) @ self.tensor_j(k, arr) @ self.grad_h(j, arr)))

    def involutivity_scale(self, i: int, j: int, k: int, x: PointLike) -> float:
        """Size of the terms in the involutivity sum, used to normalize it"""
        arr = as_phase_array(x)
        gi, gj = self.grad_h(i, arr), self.grad_h(j, arr)
        return float(np.abs(gi) @ np.abs(self.tensor_j(k, arr)) @ np.abs(gj))

    # time-dependent symmetries

    def conformal_triple(self, points: Sequence[PointLike]) -> Tuple[float, float, float]:
        fit = self.conformal_constants(points)
        return fit.lambda_, fit.mu, fit.nu

    @staticmethod
    def time_dependent_coefficient(j: int, constants: Tuple[float, float, float]) -> float:
        """c = mu + nu + (j-1)(mu - lambda)"""
        lam, mu, nu = constants
        return mu + nu + (j - 1) * (mu - lam)

    def time_dependent_symmetry_defect(self, i: int, j: int, t: float, x: PointLike,
                                       constants: Optional[Tuple[float, float, float]] = None) -> np.ndarray:
        """
        c X_{i+j} + [Y(t), X_j] with Y(t) = X_i + t c X_{i+j} (flows X_k).

        Without `constants`, (lambda, mu, nu) are measured at x and the origin.
        """
        if i < 1 or j < 1:
            raise InvalidDimensionError(f"time-dependent symmetry needs i, j >= 1, got ({i}, {j})")
        arr = as_phase_array(x)
        n = dims_from_phase(arr).n
        if constants is None:
            constants = self.conformal_triple([arr, PhasePoint.origin(n).flat])
        c = self.time_dependent_coefficient(j, constants)
        Y = self.master_field(i, n) + (t * c) * self.flow_field(i + j, n)
        return c * self.flow(i + j, arr) + symmetry_fields.vf_lie_bracket(Y, self.flow_field(j, n), arr)

    def time_dependent_symmetry_residual(self, i: int, j: int, t: float, x: PointLike,
                                         constants: Optional[Tuple[float, float, float]] = None) -> float:
        return inf_norm(self.time_dependent_symmetry_defect(i, j, t, x, constants))

    def time_dependent_affinity(self, i: int, j: int, x: PointLike,
                                constants: Optional[Tuple[float, float, float]] = None) -> float:
        """Deviation of the defect at t = 1/2 from the mean of t = 0 and t = 1, relative"""
        arr = as_phase_array(x)
        if constants is None:
            constants = self.conformal_triple([arr, PhasePoint.origin(dims_from_phase(arr).n).flat])
        d0 = self.time_dependent_symmetry_defect(i, j, 0.0, arr, constants)
        d1 = self.time_dependent_symmetry_defect(i, j, 1.0, arr, constants)
        dh = self.time_dependent_symmetry_defect(i, j, 0.5, arr, constants)
        mid = 0.5 * (d0 + d1)
        return relative_inf(dh - mid, np.concatenate([d0, d1]))

    # comparisons involving the explicit X1

    def x1_comparison(self, x: PointLike) -> Dict[str, float]:
        """R X0 against the explicit X1: difference, its action on J2, its bracket with the first flow"""
        arr = as_phase_array(x)
        n = dims_from_phase(arr).n
        diff = self.master_field(1, n) - symmetry_fields.x1_field(n)
        J2 = poisson_tensors.j2_field(n)
        return {
            "difference": inf_norm(diff(arr)),
            "lie_j2": inf_norm(poisson_tensors.lie_derivative_bivector(diff, J2, arr)),
            "flow1_bracket": inf_norm(symmetry_fields.vf_lie_bracket(diff, self.flow_field(1, n), arr)),
        }

    def master_degree_check(self, x: PointLike, field: str = "explicit") -> Dict[str, float]:
        """
        Master-symmetry test for X1: [X1, X_1] must be nonzero while
        [[X1, X_1], X_1] vanishes (flows X_k). The double bracket uses a
        finite-difference Jacobian and is reported relative to its terms.
        """
        arr = as_phase_array(x)
        n = dims_from_phase(arr).n
        X1 = self._master_or_explicit(1, n, field)
        F1 = self.flow_field(1, n)
        inner = symmetry_fields.bracket_field(X1, F1)
        inner_value = inner(arr)
        inner_jac = inner.jacobian_at(arr)
        f1 = F1(arr)
        outer = F1.jacobian_at(arr) @ inner_value - inner_jac @ f1
        scale = max(1.0, inf_norm(inner_value) * inf_norm(F1.jacobian_at(arr)), inf_norm(inner_jac) * inf_norm(f1))
        return {
            "single_bracket": inf_norm(inner_value),
            "double_bracket": inf_norm(outer) / scale,
            "flow2_difference": relative_inf(inner_value - self.flow(2, arr), self.flow(2, arr)),
        }


hierarchy_builder = HierarchyBuilder()
