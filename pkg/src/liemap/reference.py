"""Fixed-step Runge-Kutta baseline for polynomial ODEs.

Demo and test infrastructure only: the simulation API of this package
is map application (:mod:`liemap.propagate`).  This integrator exists so
demos can emit side-by-side comparison data and tests have an
independent trajectory oracle.
"""

from __future__ import annotations

import numpy as np

from .errors import DivergenceError
from .odes import PolynomialODE
from .propagate import Trajectory


def rk4_step(ode: PolynomialODE, x: np.ndarray, h: float) -> np.ndarray:
    k1 = ode.rhs(x)
    k2 = ode.rhs(x + 0.5 * h * k1)
    k3 = ode.rhs(x + 0.5 * h * k2)
    k4 = ode.rhs(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_trajectory(ode: PolynomialODE, x0, dt: float, steps: int,
                   substeps: int = 1, t0: float = 0.0) -> Trajectory:
    """Integrate on the grid ``t0 + i*dt`` with ``substeps`` RK4 stages
    per grid interval."""
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    if substeps < 1:
        raise ValueError(f"substeps must be >= 1, got {substeps}")
    x = np.asarray(x0, dtype=float).copy()
    h = dt / substeps
    out = np.empty((steps + 1, ode.n))
    out[0] = x
    for i in range(steps):
        for _ in range(substeps):
            x = rk4_step(ode, x, h)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(
                f"reference integration diverged at step {i + 1} of {steps}",
                step_index=i + 1,
            )
        out[i + 1] = x
    return Trajectory(dt=dt, states=out, t0=t0)
