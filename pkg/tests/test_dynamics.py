import numpy as np
import pytest

from app.core.errors import DomainError, IntegrationError
from app.models.schemas import Space
from app.services.dynamics import FlowIntegrator, Monitor
from app.services.maps import coordinate_maps
from tests.utils.helpers import origin, u_points


def test_rk4_step_on_linear_equation():
    """Test one RK4 step of x' = x against the fourth-order Taylor polynomial"""
    integrator = FlowIntegrator()
    h = 0.1
    x = integrator.rk4_step(lambda y: y, np.array([1.0]), h)
    assert x[0] == pytest.approx(1.0 + h + h ** 2 / 2 + h ** 3 / 6 + h ** 4 / 24, abs=1e-15)


def test_rk4_step_constant_field():
    """Test that a constant field is integrated exactly"""
    integrator = FlowIntegrator()
    x = integrator.rk4_step(lambda y: np.array([2.0, -1.0]), np.zeros(2), 0.25)
    assert np.allclose(x, [0.5, -0.25], rtol=0.0, atol=1e-15)


def test_rk4_step_rejects_bad_step():
    """Test that the step must be positive"""
    integrator = FlowIntegrator()
    with pytest.raises(DomainError):
        integrator.rk4_step(lambda y: y, np.ones(1), 0.0)


def test_rk4_step_detects_blow_up():
    """Test that a non-finite state raises"""
    integrator = FlowIntegrator()
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(IntegrationError):
            integrator.rk4_step(lambda y: y ** 2, np.array([1e200]), 1.0)


def test_output_stride():
    """Test output every 0.01 time units, at least every step"""
    integrator = FlowIntegrator()
    assert integrator.output_stride(1e-3) == 10
    assert integrator.output_stride(0.01) == 1
    assert integrator.output_stride(0.05) == 1


def test_integrate_lands_on_final_time():
    """Test the step count and the last recorded time"""
    integrator = FlowIntegrator()
    traj = integrator.integrate(lambda y: -y, np.array([1.0]), t1=1.0, dt=0.3)
    assert traj.steps == 4
    assert traj.times[-1] == pytest.approx(1.0)
    assert traj.states[-1][0] == pytest.approx(np.exp(-1.0), abs=1e-4)
    assert not traj.failed
    assert not traj.monitored


def test_integrate_rejects_bad_window():
    """Test 0 < dt <= t1"""
    integrator = FlowIntegrator()
    with pytest.raises(DomainError):
        integrator.integrate(lambda y: y, np.ones(1), t1=1.0, dt=2.0)
    with pytest.raises(DomainError):
        integrator.integrate(lambda y: y, np.ones(1), t1=0.0, dt=0.1)


def test_integrate_reports_partial_trajectory():
    """Test that a blow-up ends the run with a flagged partial trajectory"""
    integrator = FlowIntegrator()
    with np.errstate(over="ignore", invalid="ignore"):
        traj = integrator.integrate(lambda y: y ** 2, np.array([1.0]), t1=2.0, dt=0.1)
    assert traj.failed
    assert "non-finite" in traj.error
    assert 0 < traj.steps < 20
    assert len(traj.times) >= 1
    assert all(np.all(np.isfinite(x)) for x in traj.states)
    assert traj.times[-1] <= traj.steps * 0.1 + 1e-12


def test_km_flow_conserves_invariants():
    """Test invariant and spectrum drift along the KM flow from u = (1, 1, 1)"""
    integrator = FlowIntegrator()
    traj = integrator.integrate(integrator.km_field(3), np.ones(3), t1=10.0, dt=1e-3, monitor=Monitor(kmax=4))
    report = integrator.drift_report(traj)
    assert traj.positive
    assert report.invariant_drift[0] < 1e-10
    assert report.max_invariant_drift < 1e-9
    assert report.max_eigenvalue_drift < 1e-9
    assert report.stride == 10
    assert report.steps == 10000


def test_km_flow_spectrum_is_isospectral_for_random_start():
    """Test eigenvalue drift on a seeded starting point for n = 3"""
    integrator = FlowIntegrator()
    u0 = u_points(3, count=1, seed=42)[0]
    traj = integrator.integrate(integrator.km_field(5), u0, t1=10.0, dt=1e-3, monitor=Monitor(kmax=4))
    assert integrator.drift_report(traj).max_eigenvalue_drift < 1e-9
    assert all(np.all(u > 0) for u in traj.u_states)


def test_single_site_is_an_equilibrium():
    """Test that n = 1 does not move"""
    integrator = FlowIntegrator()
    traj = integrator.integrate(integrator.km_field(1), np.array([0.7]), t1=1.0, dt=0.1, monitor=Monitor(kmax=2))
    report = integrator.drift_report(traj)
    assert traj.states[-1][0] == 0.7
    assert report.max_invariant_drift == 0.0
    assert report.max_eigenvalue_drift == 0.0


def test_invariant_drift_shrinks_with_fourth_order():
    """Test that halving the step shrinks invariant drift by about 2^4"""
    integrator = FlowIntegrator()
    u0 = u_points(3, count=1, seed=42)[0]
    field = integrator.km_field(5)
    coarse = integrator.drift_report(integrator.integrate(field, u0, t1=4.0, dt=0.04, monitor=Monitor(kmax=4)))
    fine = integrator.drift_report(integrator.integrate(field, u0, t1=4.0, dt=0.02, monitor=Monitor(kmax=4)))
    ratio = coarse.max_invariant_drift / fine.max_invariant_drift
    assert 6.0 < ratio < 40.0


def test_phase_flow_projects_to_km_flow():
    """Test that the lifted flow from the origin projects onto the KM flow from u = (1, 1, 1)"""
    integrator = FlowIntegrator()
    lifted = integrator.integrate(integrator.phase_field(2), origin(2), t1=2.0, dt=1e-3,
                                  monitor=Monitor(space=Space.PHASE, kmax=2))
    direct = integrator.integrate(integrator.km_field(3), np.ones(3), t1=2.0, dt=1e-3, monitor=Monitor(kmax=2))
    assert len(lifted.u_states) == len(direct.states)
    for u_lifted, u_direct in zip(lifted.u_states, direct.states):
        assert np.max(np.abs(u_lifted - u_direct)) < 1e-8
    assert np.allclose(lifted.u_states[-1], coordinate_maps.volterra_map(lifted.states[-1]))


def test_drift_report_without_monitoring():
    """Test an empty drift report for unmonitored runs"""
    integrator = FlowIntegrator()
    traj = integrator.integrate(lambda y: np.zeros(1), np.ones(1), t1=0.1, dt=0.01)
    report = integrator.drift_report(traj)
    assert report.invariant_drift == []
    assert report.max_eigenvalue_drift == 0.0
    assert report.method == "rk4"
