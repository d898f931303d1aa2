"""Apply Lie maps to states: rollouts and Poincaré sections.

Simulation by map application is inherently discrete-time: one map
application advances the state by the map's ``dt``.  Trajectories are
therefore plain arrays of states on a uniform time grid, and section
crossings are located by linear interpolation between consecutive grid
points (error O(dt^2), below plotting resolution for the step sizes used
here).

Truncated polynomial maps diverge violently outside their convergence
region, so rollouts carry a norm guard and fail fast with the offending
step index instead of returning infinities.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .builder import LieMap
from .errors import DivergenceError
from .monomial import stacked_exponents

DEFAULT_GUARD = 1e6


@dataclass
class Trajectory:
    """States on the uniform grid ``t0 + i*dt``."""

    dt: float
    states: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim != 2 or self.states.shape[0] < 1:
            raise ValueError(f"states must be a non-empty (steps+1, n) array, "
                             f"got shape {self.states.shape}")

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def steps(self) -> int:
        return self.states.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.states.shape[0])


@dataclass
class SectionEvent:
    """One hyperplane crossing of a trajectory.

    ``step_index`` is the grid index before the crossing; ``t`` the
    interpolated crossing time; ``projected`` the two plane coordinates.
    """

    step_index: int
    t: float
    crossing_state: np.ndarray
    projected: np.ndarray


def _stacked_weights(m: LieMap) -> np.ndarray:
    return np.hstack(m.weights)


def _apply_stacked(wstack, exps, x):
    return wstack @ np.prod(x[None, :] ** exps, axis=1)


def apply(m: LieMap, x) -> np.ndarray:
    """One map application: ``W_0 + sum_k W_k x^[k]``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (m.n,):
        raise ValueError(f"state has shape {x.shape}, expected ({m.n},)")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"non-finite input state {x}")
    return _apply_stacked(_stacked_weights(m), stacked_exponents(m.n, m.order), x)


def apply_batch(m: LieMap, states) -> list[np.ndarray]:
    """Element-wise :func:`apply`, preserving input order."""
    wstack = _stacked_weights(m)
    exps = stacked_exponents(m.n, m.order)
    out = []
    for i, x in enumerate(states):
        x = np.asarray(x, dtype=float)
        if x.shape != (m.n,):
            raise ValueError(f"element {i}: state has shape {x.shape}, "
                             f"expected ({m.n},)")
        if not np.all(np.isfinite(x)):
            raise ValueError(f"element {i}: non-finite input state {x}")
        out.append(_apply_stacked(wstack, exps, x))
    return out


def simulate(m: LieMap, x0, steps: int, guard: float = DEFAULT_GUARD,
             t0: float = 0.0) -> Trajectory:
    """Roll the map forward: ``steps`` applications starting from ``x0``.

    Raises :class:`DivergenceError` naming the first step whose state
    norm exceeds ``guard``.
    """
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    x = np.asarray(x0, dtype=float)
    if x.shape != (m.n,):
        raise ValueError(f"state has shape {x.shape}, expected ({m.n},)")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"non-finite initial state {x}")
    wstack = _stacked_weights(m)
    exps = stacked_exponents(m.n, m.order)
    out = np.empty((steps + 1, m.n))
    out[0] = x
    for i in range(steps):
        x = _apply_stacked(wstack, exps, x)
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > guard:
            raise DivergenceError(
                f"trajectory diverged at step {i + 1} of {steps} "
                f"(norm guard {guard:g})",
                step_index=i + 1,
            )
        out[i + 1] = x
    return Trajectory(dt=m.dt, states=out, t0=t0)


def extract_section(states, dt: float, coord: int, value: float,
                    plane: tuple[int, int], direction: str = "positive",
                    t0: float = 0.0) -> list[SectionEvent]:
    """Locate hyperplane crossings ``x[coord] == value`` in a state array.

    ``direction`` selects ``"positive"`` (coordinate increasing through
    the level, the default), ``"negative"``, or ``"both"``.
    """
    if direction not in ("positive", "negative", "both"):
        raise ValueError(f"unknown direction {direction!r}")
    states = np.asarray(states, dtype=float)
    n = states.shape[1]
    if not (0 <= coord < n and 0 <= plane[0] < n and 0 <= plane[1] < n):
        raise ValueError(f"coordinate indices out of range for dimension {n}")
    g = states[:, coord] - value
    events = []
    for i in range(states.shape[0] - 1):
        up = g[i] < 0.0 < g[i + 1]
        down = g[i] > 0.0 > g[i + 1]
        if not ((direction in ("positive", "both") and up)
                or (direction in ("negative", "both") and down)):
            continue
        frac = g[i] / (g[i] - g[i + 1])
        crossing = states[i] + frac * (states[i + 1] - states[i])
        events.append(SectionEvent(
            step_index=i,
            t=t0 + (i + frac) * dt,
            crossing_state=crossing,
            projected=crossing[list(plane)],
        ))
    return events


def poincare_section(m: LieMap, x0, steps: int, coord: int, value: float,
                     plane: tuple[int, int], direction: str = "positive",
                     guard: float = DEFAULT_GUARD) -> list[SectionEvent]:
    """Simulate and return the hyperplane crossings of the rollout."""
    traj = simulate(m, x0, steps, guard=guard)
    return extract_section(traj.states, traj.dt, coord, value, plane,
                           direction=direction, t0=traj.t0)


# ---------------------------------------------------------------------------
# CSV export


def write_trajectory_csv(traj: Trajectory, variable_names, path) -> None:
    """Header ``t,<var1>,...,<varn>``, one row per step."""
    names = list(variable_names)
    if len(names) != traj.n:
        raise ValueError(f"{len(names)} names for dimension {traj.n}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("t," + ",".join(names) + "\n")
        for i, row in enumerate(traj.states):
            t = traj.t0 + i * traj.dt
            fh.write(repr(float(t)) + ","
                     + ",".join(repr(float(v)) for v in row) + "\n")


def write_section_csv(events, plane_names, path) -> None:
    """Header ``step,t,<plane1>,<plane2>``, one row per crossing."""
    p1, p2 = plane_names
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"step,t,{p1},{p2}\n")
        for ev in events:
            fh.write(f"{ev.step_index},{repr(float(ev.t))},"
                     f"{repr(float(ev.projected[0]))},"
                     f"{repr(float(ev.projected[1]))}\n")
