import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from app.core.calculus import VectorFieldHandle
from app.core.config import settings
from app.core.errors import DomainError, IntegrationError
from app.models.schemas import DriftReport, Space
from app.services.hierarchy import hierarchy_builder
from app.services.lax import lax_analyzer
from app.services.maps import coordinate_maps

logger = logging.getLogger(__name__)

RHS = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Monitor:
    """What to record along a trajectory; phase states are pushed through the Volterra map"""
    space: Space = Space.U
    kmax: int = 4


@dataclass
class Trajectory:
    times: List[float] = field(default_factory=list)
    states: List[np.ndarray] = field(default_factory=list)
    u_states: List[np.ndarray] = field(default_factory=list)
    invariant_series: List[np.ndarray] = field(default_factory=list)
    spectrum_series: List[np.ndarray] = field(default_factory=list)
    steps: int = 0
    stride: int = 1
    space: Space = Space.U
    positive: bool = True
    failed: bool = False
    error: Optional[str] = None

    @property
    def monitored(self) -> bool:
        return len(self.invariant_series) > 0


class FlowIntegrator:
    """Fixed-step RK4 with invariant and spectrum monitoring"""

    def km_field(self, N: int) -> VectorFieldHandle:
        return VectorFieldHandle(dim=N, eval=lax_analyzer.km_rhs, label="km")

    def phase_field(self, n: int) -> VectorFieldHandle:
        return hierarchy_builder.flow_field(1, n)

    def rk4_step(self, f: RHS, x: np.ndarray, dt: float) -> np.ndarray:
        """One classical fourth-order Runge-Kutta step"""
        if dt <= 0:
            raise DomainError(f"time step must be positive, got {dt}")
        x = np.asarray(x, dtype=float)
        k1 = f(x)
        k2 = f(x + 0.5 * dt * k1)
        k3 = f(x + 0.5 * dt * k2)
        k4 = f(x + dt * k3)
        x_next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x_next)):
            raise IntegrationError("non-finite state after RK4 step")
        return x_next

    def output_stride(self, dt: float) -> int:
        return max(1, int(np.floor(settings.output_stride_time / dt + 1e-9)))

    def _record(self, traj: Trajectory, t: float, x: np.ndarray, monitor: Optional[Monitor]) -> None:
        traj.times.append(t)
        traj.states.append(x.copy())
        if monitor is None:
            return
        u = x if monitor.space == Space.U else coordinate_maps.volterra_map(x)
        if np.any(u <= 0):
            traj.positive = False
            raise DomainError(f"state left the positive orthant at t={t:g}")
        traj.u_states.append(u.copy())
        traj.invariant_series.append(lax_analyzer.invariants(u, monitor.kmax))
        traj.spectrum_series.append(lax_analyzer.spectrum(u))

    def integrate(self, f: RHS, x0: np.ndarray, t1: float, dt: float,
                  monitor: Optional[Monitor] = None) -> Trajectory:
        """
        Fixed-step RK4 from 0 to t1.

        The step count is ceil(t1/dt) with the step shrunk to land on t1.
        States are recorded every `output_stride(dt)` steps and at t1. A
        non-finite state ends the run with a partial trajectory flagged as
        failed.
        """
        if t1 <= 0 or dt <= 0 or dt > t1:
            raise DomainError(f"need 0 < dt <= t1, got dt={dt}, t1={t1}")
        steps = int(np.ceil(t1 / dt - 1e-9))
        h = t1 / steps
        stride = self.output_stride(dt)
        traj = Trajectory(stride=stride, space=monitor.space if monitor else Space.U)
        x = np.array(x0, dtype=float)
        try:
            self._record(traj, 0.0, x, monitor)
            for step in range(1, steps + 1):
                x = self.rk4_step(f, x, h)
                traj.steps = step
                if step % stride == 0 or step == steps:
                    self._record(traj, step * h, x, monitor)
        except (IntegrationError, DomainError) as exc:
            traj.failed = True
            traj.error = str(exc)
            logger.error(f"Integration aborted after {traj.steps} steps: {exc}")
        return traj

    def drift_report(self, traj: Trajectory) -> DriftReport:
        """Largest deviation of every invariant (relative) and eigenvalue (absolute) from t = 0"""
        if traj.monitored:
            H = np.array(traj.invariant_series)
            spec = np.array(traj.spectrum_series)
            inv_drift = np.max(np.abs(H - H[0]), axis=0) / np.maximum(1.0, np.abs(H[0]))
            eig_drift = np.max(np.abs(spec - spec[0]), axis=0)
        else:
            inv_drift = np.zeros(0)
            eig_drift = np.zeros(0)
        return DriftReport(
            invariant_drift=[float(v) for v in inv_drift],
            eigenvalue_drift=[float(v) for v in eig_drift],
            max_invariant_drift=float(np.max(inv_drift, initial=0.0)),
            max_eigenvalue_drift=float(np.max(eig_drift, initial=0.0)),
            steps=traj.steps,
            stride=traj.stride,
            positive=traj.positive,
            failed=traj.failed,
            error=traj.error,
        )


flow_integrator = FlowIntegrator()
