import numpy as np
import pytest

from app.core.errors import InvalidDimensionError
from app.services.hierarchy import HierarchyBuilder
from app.services.poisson import poisson_tensors
from app.services.symmetries import symmetry_fields
from app.services.verification import closed_form_h2
from tests.utils.helpers import central_jacobian, origin, phase_points, rel_error, u_points


def test_recursion_maps_j2_to_j3():
    """Test R J2 = J3"""
    hierarchy = HierarchyBuilder()
    for x in phase_points(2, count=3):
        R = hierarchy.recursion(x)
        assert rel_error(R @ poisson_tensors.j2(2), poisson_tensors.j3_oracle(x)) < 1e-14


def test_recursion_partials_match_differences():
    """Test the partials of R against central differences"""
    hierarchy = HierarchyBuilder()
    for x in phase_points(2, count=2):
        assert rel_error(hierarchy.recursion_partials(x), central_jacobian(hierarchy.recursion, x)) < 1e-7


def test_low_tensors():
    """Test J_2 = J2 and J_3 = J3"""
    hierarchy = HierarchyBuilder()
    x = phase_points(3, count=1)[0]
    assert np.array_equal(hierarchy.tensor_j(2, x), poisson_tensors.j2(3))
    assert rel_error(hierarchy.tensor_j(3, x), poisson_tensors.j3_oracle(x)) < 1e-13


def test_tensor_index_must_be_at_least_two():
    """Test that J_1 is not defined"""
    hierarchy = HierarchyBuilder()
    with pytest.raises(InvalidDimensionError):
        hierarchy.tensor_j(1, origin(2))


def test_higher_tensors_are_antisymmetric():
    """Test J_4 and J_5 antisymmetry and R J2 R^T antisymmetry"""
    hierarchy = HierarchyBuilder()
    J2 = poisson_tensors.j2(2)
    for x in phase_points(2, count=5):
        for k in (4, 5):
            J = hierarchy.tensor_j(k, x)
            assert np.max(np.abs(J + J.T)) < 1e-12 * max(1.0, np.max(np.abs(J)))
        R = hierarchy.recursion(x)
        transported = R @ J2 @ R.T
        assert np.max(np.abs(transported + transported.T)) < 1e-12 * max(1.0, np.max(np.abs(transported)))


def test_tensor_partials_match_differences():
    """Test the product-rule partials of J_4"""
    hierarchy = HierarchyBuilder()
    for x in phase_points(2, count=2):
        numeric = central_jacobian(lambda y: hierarchy.tensor_j(4, y), x)
        assert rel_error(hierarchy.tensor_j_partials(4, x), numeric) < 1e-6


def test_j4_is_poisson():
    """Test the Jacobi identity for J_4 with propagated partials"""
    hierarchy = HierarchyBuilder()
    j4 = hierarchy.tensor_field(4, 2)
    for x in phase_points(2, count=3):
        assert poisson_tensors.jacobi_residual(j4, x, relative=True) < 1e-10


def test_h1_is_sum_of_exponentials():
    """Test h1 = sum w_i, equal to 3 at the origin for n = 2"""
    hierarchy = HierarchyBuilder()
    assert hierarchy.h_k(1, origin(2)) == pytest.approx(3.0)


def test_h2_closed_form():
    """Test h2 = 1/2 sum w_i^2 + sum w_i w_{i+1}"""
    hierarchy = HierarchyBuilder()
    for n in (1, 2, 3):
        for x in phase_points(n, count=5):
            assert hierarchy.h_k(2, x) == pytest.approx(closed_form_h2(x), rel=1e-13)


def test_hamiltonian_index_must_be_positive():
    """Test that h_0 is rejected"""
    hierarchy = HierarchyBuilder()
    with pytest.raises(InvalidDimensionError):
        hierarchy.h_k(0, origin(2))
    with pytest.raises(InvalidDimensionError):
        hierarchy.grad_h(0, origin(2))


def test_hamiltonian_gradients_match_differences():
    """Test the chain-rule gradients of h_k"""
    hierarchy = HierarchyBuilder()
    for x in phase_points(2, count=3):
        for k in range(1, 5):
            numeric = central_jacobian(lambda y: hierarchy.h_k(k, y), x)
            assert rel_error(hierarchy.grad_h(k, x), numeric) < 1e-7


def test_hessian_of_h1():
    """Test the Hessian of h1 against differences of its gradient"""
    hierarchy = HierarchyBuilder()
    for x in phase_points(2, count=3):
        numeric = central_jacobian(lambda y: hierarchy.grad_h(1, y), x)
        assert rel_error(hierarchy.hessian_h1(x), numeric) < 1e-7


def test_first_flow_at_origin():
    """Test X_1 = (1, 1, 1, 1/2, 0, -1/2) at the origin for n = 2"""
    hierarchy = HierarchyBuilder()
    assert np.allclose(hierarchy.flow(1, origin(2)), [1.0, 1.0, 1.0, 0.5, 0.0, -0.5])


def test_second_flow_is_bihamiltonian():
    """Test R J2 grad h1 = J3 grad h1 = J2 grad h2"""
    hierarchy = HierarchyBuilder()
    for n in (2, 3):
        J2 = poisson_tensors.j2(n)
        for x in phase_points(n, count=5):
            flow2 = hierarchy.flow(2, x)
            assert rel_error(flow2, poisson_tensors.j3_oracle(x) @ hierarchy.grad_h(1, x)) < 1e-12
            assert rel_error(flow2, J2 @ hierarchy.grad_h(2, x)) < 1e-10
            assert hierarchy.bihamiltonian_residual(x, relative=True) < 1e-10


def test_flow_jacobians_match_differences():
    """Test the propagated flow Jacobians"""
    hierarchy = HierarchyBuilder()
    for x in phase_points(2, count=2):
        for k in (1, 2, 3):
            numeric = central_jacobian(lambda y: hierarchy.flow(k, y), x)
            assert rel_error(hierarchy.flow_jacobian(k, x), numeric) < 1e-6


def test_master_fields():
    """Test X_0 = sum d/dp_i and the propagated Jacobians of R^k X_0"""
    hierarchy = HierarchyBuilder()
    x = phase_points(2, count=1)[0]
    assert np.array_equal(hierarchy.master_x(0, x), symmetry_fields.x0(x))
    for k in (1, 2):
        numeric = central_jacobian(lambda y: hierarchy.master_x(k, y), x)
        assert rel_error(hierarchy.master_x_jacobian(k, x), numeric) < 1e-6
    with pytest.raises(InvalidDimensionError):
        hierarchy.master_x(-1, x)


def test_explicit_field_only_for_first_index():
    """Test that the explicit master symmetry is X1 only"""
    hierarchy = HierarchyBuilder()
    with pytest.raises(InvalidDimensionError):
        hierarchy.deformation_coeff(2, 2, phase_points(2, count=2), field="explicit")


def test_lenard_chain_in_u_space():
    """Test pi3 grad H_i = pi2 grad H_{i+1}"""
    hierarchy = HierarchyBuilder()
    assert hierarchy.lenard_residual_u(1, np.ones(3)) < 1e-14
    for n in (2, 3, 5):
        for u in u_points(n, count=10):
            for i in range(1, 5):
                assert hierarchy.lenard_residual_u(i, u, relative=True) < 1e-10


def test_lenard_chain_in_phase_space():
    """Test R J2 grad h_i = J2 grad h_{i+1}"""
    hierarchy = HierarchyBuilder()
    assert hierarchy.lenard_residual_phase(1, origin(2)) < 1e-12
    for x in phase_points(2, count=5):
        for i in (1, 2):
            assert hierarchy.lenard_residual_phase(i, x, relative=True) < 1e-8


def test_multi_hamiltonian_relations():
    """Test J_m grad h_j = J2 grad h_{m+j-2}"""
    hierarchy = HierarchyBuilder()
    for x in phase_points(2, count=3):
        assert hierarchy.multi_hamiltonian_residual(2, 3, x) == 0.0
        for m, j in ((3, 1), (3, 2), (4, 1)):
            assert hierarchy.multi_hamiltonian_residual(m, j, x, relative=True) < 1e-8
    with pytest.raises(InvalidDimensionError):
        hierarchy.multi_hamiltonian_residual(1, 1, origin(2))


def test_conformal_constants():
    """Test lambda = 0 exactly, mu = 1 and nu = 1 for X0"""
    hierarchy = HierarchyBuilder()
    fit = hierarchy.conformal_constants(phase_points(2, count=5))
    assert fit.lambda_exact_zero
    assert fit.lambda_ == 0.0
    assert fit.mu == pytest.approx(1.0, abs=1e-12)
    assert fit.nu == pytest.approx(1.0, abs=1e-12)


def test_conformal_fit_needs_points():
    """Test that one point is not enough for a fit"""
    hierarchy = HierarchyBuilder()
    with pytest.raises(InvalidDimensionError):
        hierarchy.conformal_constants([origin(2)])


def test_tensor_deformation_along_x0():
    """Test L_{X0} J_j = (j - 2) J_j"""
    hierarchy = HierarchyBuilder()
    points = phase_points(2, count=4)
    zero = hierarchy.deformation_coeff(0, 2, points)
    assert zero.measured == 0.0
    assert zero.scalarity_spread == 0.0
    for j in (3, 4):
        fit = hierarchy.deformation_coeff(0, j, points)
        assert fit.measured == pytest.approx(j - 2, abs=1e-8)
        assert fit.is_scalar
        assert fit.sign_agrees


def test_tensor_deformation_along_x1():
    """Test L_{X1} J2 = -J3 for the explicit and the generated X1"""
    hierarchy = HierarchyBuilder()
    points = phase_points(2, count=4)
    for field in ("explicit", "master"):
        fit = hierarchy.deformation_coeff(1, 2, points, field=field)
        assert fit.predicted == -1.0
        assert fit.measured == pytest.approx(-1.0, abs=1e-6)
        assert fit.magnitude_error < 1e-6
        assert fit.is_scalar


def test_hamiltonian_deformation():
    """Test X_i(h_j) = (i + j) h_{i+j}"""
    hierarchy = HierarchyBuilder()
    points = phase_points(2, count=4)
    for i, j, field in ((0, 1, "master"), (0, 2, "master"), (1, 1, "explicit"), (1, 1, "master")):
        fit = hierarchy.ham_deformation_check(i, j, points, field=field)
        assert fit.measured == pytest.approx(i + j, abs=1e-8)
        assert fit.is_scalar


def test_master_commutators_with_x0():
    """Test [X0, X_j] = j X_j"""
    hierarchy = HierarchyBuilder()
    points = phase_points(2, count=4)
    for j in (1, 2):
        fit = hierarchy.master_commutator_check(0, j, points)
        assert fit.measured == pytest.approx(j, abs=1e-8)
        assert fit.is_scalar
    with pytest.raises(InvalidDimensionError):
        hierarchy.master_commutator_check(2, 1, points)


def test_flows_commute():
    """Test [X_i, X_j] = 0 for the flows"""
    hierarchy = HierarchyBuilder()
    for x in phase_points(2, count=3):
        assert hierarchy.flow_commutator_residual(1, 1, x) == 0.0
        assert hierarchy.flow_commutator_residual(1, 2, x) < 1e-10
        assert hierarchy.flow_commutator_residual(1, 3, x) < 1e-10


def test_hamiltonians_in_involution():
    """Test {h_i, h_j}_{J_k} = 0 for k = 2, 3"""
    hierarchy = HierarchyBuilder()
    for x in phase_points(2, count=3):
        for k in (2, 3):
            for i, j in ((1, 2), (1, 3), (2, 3)):
                scale = max(1.0, hierarchy.involutivity_scale(i, j, k, x))
                assert hierarchy.involutivity_residual(i, j, k, x) / scale < 1e-12


def test_time_dependent_coefficient_from_measured_constants():
    """Test c = mu + nu + (j-1)(mu - lambda) with the measured conformal constants of X0"""
    hierarchy = HierarchyBuilder()
    constants = hierarchy.conformal_triple(phase_points(2, count=3))
    assert hierarchy.time_dependent_coefficient(1, constants) == pytest.approx(2.0, abs=1e-12)
    assert hierarchy.time_dependent_coefficient(2, constants) == pytest.approx(3.0, abs=1e-12)
    assert hierarchy.time_dependent_coefficient(2, (0.5, 1.0, 1.0)) == 2.5
    x = phase_points(2, count=1)[0]
    measured = hierarchy.time_dependent_symmetry_defect(1, 1, 0.5, x)
    given = hierarchy.time_dependent_symmetry_defect(1, 1, 0.5, x, constants)
    assert np.allclose(measured, given, rtol=1e-10, atol=1e-10)
    shifted = hierarchy.time_dependent_symmetry_defect(1, 1, 0.5, x, (0.0, 2.0, 1.0))
    assert not np.allclose(measured, shifted)


def test_time_dependent_defect_is_affine():
    """Test that the defect is affine in t"""
    hierarchy = HierarchyBuilder()
    for x in phase_points(2, count=3):
        assert hierarchy.time_dependent_affinity(1, 1, x) < 1e-10
    with pytest.raises(InvalidDimensionError):
        hierarchy.time_dependent_symmetry_defect(0, 1, 0.0, origin(2))


def test_explicit_x1_is_master_symmetry_of_first_flow():
    """Test [X1, X_1] = X_2 and [[X1, X_1], X_1] = 0"""
    hierarchy = HierarchyBuilder()
    for x in phase_points(2, count=3):
        check = hierarchy.master_degree_check(x)
        assert check["single_bracket"] > 1e-3
        assert check["double_bracket"] < 1e-5
        assert check["flow2_difference"] < 1e-8


def test_recursion_of_x0_is_explicit_x1():
    """Test that R X0 equals the explicit X1, so the difference is inert on J2 and the first flow"""
    hierarchy = HierarchyBuilder()
    for x in phase_points(2, count=3):
        result = hierarchy.x1_comparison(x)
        assert set(result) == {"difference", "lie_j2", "flow1_bracket"}
        assert result["difference"] < 1e-12
        assert result["lie_j2"] < 1e-10
        assert result["flow1_bracket"] < 1e-10
