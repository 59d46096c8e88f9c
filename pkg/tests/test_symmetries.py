import numpy as np
import pytest

from app.core.calculus import VectorFieldHandle
from app.services.hierarchy import hierarchy_builder
from app.services.lax import lax_analyzer
from app.services.maps import coordinate_maps
from app.services.symmetries import SymmetryFields
from tests.utils.helpers import central_jacobian, origin, phase_points, rel_error, u_points


def test_c_matrix_for_n2():
    """Test c_{i,j}: zero above the diagonal, -1 below, i-1 on it"""
    symmetries = SymmetryFields()
    C = symmetries.c_matrix(2)
    expected = np.array([
        [0, 0, 0],
        [-1, 1, 0],
        [-1, -1, 2],
    ])
    assert np.array_equal(C.entries, expected)
    assert C.c(1, 0) == 0
    assert C.c(3, 4) == 0
    assert C.c(3, 3) == 2


def test_c_matrix_first_row_is_zero():
    """Test that row 1 of c vanishes for every n"""
    symmetries = SymmetryFields()
    for n in range(1, 6):
        assert not np.any(symmetries.c_matrix(n).entries[0])


def test_master_y1_example():
    """Test Y1 = (3, 4, 0) at u = (1, 1, 1)"""
    symmetries = SymmetryFields()
    assert symmetries.master_y1(np.ones(3)).tolist() == [3.0, 4.0, 0.0]


def test_master_y1_jacobian_matches_differences():
    """Test the analytic Jacobian of Y1"""
    symmetries = SymmetryFields()
    for u in u_points(3, count=3):
        assert rel_error(symmetries.master_y1_jacobian(u), central_jacobian(symmetries.master_y1, u)) < 1e-8


def test_euler_field_is_identity():
    """Test Y0 = u"""
    symmetries = SymmetryFields()
    u = np.array([0.5, 1.5, 2.5])
    assert np.array_equal(symmetries.euler_y0(u), u)


def test_x0_shifts_momenta():
    """Test X0 = sum of d/dp_i"""
    symmetries = SymmetryFields()
    assert symmetries.x0(origin(2)).tolist() == [0.0, 0.0, 0.0, 1.0, 1.0, 1.0]


def test_x1_at_origin():
    """Test A = (-2, 0, 2), B = (3, 2, 0) at the origin for n = 2"""
    symmetries = SymmetryFields()
    assert np.allclose(symmetries.x1(origin(2)), [-2.0, 0.0, 2.0, 3.0, 2.0, 0.0])


def test_x1_single_site():
    """Test X1 = w1 d/dp1 for n = 1"""
    symmetries = SymmetryFields()
    x = np.array([0.0, 0.2])
    assert np.allclose(symmetries.x1(x), [0.0, np.exp(0.2)])


def test_x1_coefficients_are_frozen():
    """Test that the cached coefficient matrix cannot be modified"""
    symmetries = SymmetryFields()
    K = symmetries.x1_coefficients(3)
    assert K.shape == (10, 5)
    with pytest.raises(ValueError):
        K[0, 0] = 1.0


def test_x1_jacobian_matches_differences():
    """Test DX1 = K diag(w) G"""
    symmetries = SymmetryFields()
    for n in (2, 3):
        for x in phase_points(n, count=3):
            assert rel_error(symmetries.x1_jacobian(x), central_jacobian(symmetries.x1, x)) < 1e-7


def test_x1_projects_to_y1():
    """Test DPsi X1 = Y1(Psi)"""
    symmetries = SymmetryFields()
    for n in (1, 2, 3, 4):
        for x in phase_points(n, count=5):
            projected = coordinate_maps.project_vector(x, symmetries.x1(x))
            assert rel_error(projected, symmetries.master_y1(coordinate_maps.volterra_map(x))) < 1e-12


def test_lie_bracket_is_antisymmetric():
    """Test [X, Y] = -[Y, X] and [X, X] = 0"""
    symmetries = SymmetryFields()
    y0, y1 = symmetries.y0_field(3), symmetries.y1_field(3)
    u = np.array([0.7, 1.1, 1.3])
    assert np.allclose(symmetries.vf_lie_bracket(y0, y1, u), -symmetries.vf_lie_bracket(y1, y0, u))
    assert np.array_equal(symmetries.vf_lie_bracket(y1, y1, u), np.zeros(3))


def test_lie_bracket_of_linear_fields():
    """Test [Ax, Bx] = (BA - AB) x"""
    symmetries = SymmetryFields()
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    B = np.array([[0.0, 0.0], [1.0, 0.0]])
    X = VectorFieldHandle(dim=2, eval=lambda x: A @ x, jacobian=lambda x: A)
    Y = VectorFieldHandle(dim=2, eval=lambda x: B @ x, jacobian=lambda x: B)
    x = np.array([1.0, 2.0])
    assert np.allclose(symmetries.vf_lie_bracket(X, Y, x), (B @ A - A @ B) @ x)


def test_bracket_field_uses_differences():
    """Test that a bracket field evaluates the bracket and has no analytic Jacobian"""
    symmetries = SymmetryFields()
    y0, y1 = symmetries.y0_field(3), symmetries.y1_field(3)
    field = symmetries.bracket_field(y0, y1)
    u = np.array([0.7, 1.1, 1.3])
    assert not field.analytic
    assert np.allclose(field(u), symmetries.master_y1(u))


def test_euler_field_scales_invariants():
    """Test Y0(H_j) = j H_j"""
    symmetries = SymmetryFields()
    y0 = symmetries.y0_field(5)
    for u in u_points(3, count=5):
        for j in range(1, 5):
            H = lax_analyzer.invariant_field(j, 5)
            assert symmetries.vf_apply_scalar(y0, H, u) == pytest.approx(j * H(u), rel=1e-12)


def test_master_field_raises_invariants():
    """Test Y1(H_j) = (j + 1) H_{j+1}"""
    symmetries = SymmetryFields()
    for n in (2, 3):
        N = 2 * n - 1
        y1 = symmetries.y1_field(N)
        for u in u_points(n, count=5):
            for j in range(1, 4):
                value = symmetries.vf_apply_scalar(y1, lax_analyzer.invariant_field(j, N), u)
                target = (j + 1) * lax_analyzer.invariants(u, j + 1)[j]
                assert value == pytest.approx(target, rel=1e-11)


def test_y1_on_h2_at_unit_point():
    """Test Y1(H2) = 3 H3 = 36 at u = (1, 1, 1)"""
    symmetries = SymmetryFields()
    value = symmetries.vf_apply_scalar(symmetries.y1_field(3), lax_analyzer.invariant_field(2, 3), np.ones(3))
    assert value == pytest.approx(36.0)


def test_euler_master_bracket():
    """Test [Y0, Y1] = Y1"""
    symmetries = SymmetryFields()
    fit = symmetries.euler_master_bracket_fit(u_points(3, count=10))
    assert fit.measured == pytest.approx(1.0, abs=1e-12)
    assert fit.scalarity_spread < 1e-12
    assert fit.sign_agrees


def test_x0_on_h1():
    """Test X0(h1) = h1"""
    symmetries = SymmetryFields()
    x0 = symmetries.x0_field(6)
    h1 = hierarchy_builder.hamiltonian(1, 2)
    for x in phase_points(2, count=5):
        assert symmetries.vf_apply_scalar(x0, h1, x) == pytest.approx(h1(x), rel=1e-13)
