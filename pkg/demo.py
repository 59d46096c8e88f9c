#!/usr/bin/env python3
"""
Example script walking through the KM lattice lab services
"""
import numpy as np

from app.core.state import PhasePoint
from app.models.schemas import SuiteName
from app.services.dynamics import Monitor, flow_integrator
from app.services.hierarchy import hierarchy_builder
from app.services.lax import lax_analyzer
from app.services.maps import coordinate_maps
from app.services.poisson import poisson_tensors
from app.services.verification import suite_runner


def print_section(title: str):
    print("\n" + "=" * 60)
    print(title)
    print("=" * 60)


def demo_lax_pair():
    """Lax residual and spectrum at u = (1, 1, 1)"""
    print_section("DEMO 1: Lax pair")
    u = np.ones(3)
    print(f"KM vector field:  {lax_analyzer.km_rhs(u)}")
    print(f"Lax residual:     {lax_analyzer.lax_residual(u):.3e}")
    print(f"Invariants H1..4: {lax_analyzer.invariants(u, 4)}")
    print(f"Spectrum of L:    {lax_analyzer.spectrum(u)}")


def demo_phase_space():
    """Volterra map and push-forward of J3 at the origin"""
    print_section("DEMO 2: Phase-space lift")
    x = PhasePoint.origin(2).flat
    print(f"Volterra map at origin: {coordinate_maps.volterra_map(x)}")
    residual = poisson_tensors.pushforward_residual(x, poisson_tensors.j3_field(2), poisson_tensors.pi3_field(3))
    print(f"J3 push-forward residual: {residual:.3e}")
    print(f"h1, h2 at origin: {hierarchy_builder.h_k(1, x)}, {hierarchy_builder.h_k(2, x)}")


def demo_integration():
    """KM flow with drift monitoring"""
    print_section("DEMO 3: RK4 integration")
    traj = flow_integrator.integrate(flow_integrator.km_field(3), np.ones(3), t1=5.0, dt=1e-3,
                                     monitor=Monitor(kmax=4))
    drift = flow_integrator.drift_report(traj)
    print(f"Steps: {drift.steps}")
    print(f"Max invariant drift:  {drift.max_invariant_drift:.3e}")
    print(f"Max eigenvalue drift: {drift.max_eigenvalue_drift:.3e}")


def demo_verification():
    """A short verification run"""
    print_section("DEMO 4: Verification suites")
    report = suite_runner.run(n=2, seed=42, points=5,
                              suites=[SuiteName.LAX, SuiteName.PUSHFORWARD, SuiteName.MASTER])
    for check in report.checks:
        status = "PASS" if check.passed else "FAIL"
        print(f"[{status}] {check.suite:12s} {check.name:40s} {check.residual:.2e}")
    print(f"\nOverall: {'passed' if report.passed else 'failed'}")


def main():
    """Run all demos"""
    print("\nKM LATTICE LAB - DEMO")
    demo_lax_pair()
    demo_phase_space()
    demo_integration()
    demo_verification()


if __name__ == "__main__":
    main()
