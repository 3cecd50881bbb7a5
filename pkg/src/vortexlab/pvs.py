"""Fixed-step RK4 integration of the point vortex system with invariant tracking."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import CollisionImminent
from .greens import PointVortexState, hamiltonian, pvs_self_velocities

FloatArray = NDArray[np.float64]

#: pairs closer than GUARD_FACTOR * dt * max_speed abort the integration
GUARD_FACTOR = 10.0


@dataclass(frozen=True)
class PvsInvariants:
    hamiltonian: float
    linear_impulse: FloatArray | None
    angular_impulse: float


def invariants(state: PointVortexState) -> PvsInvariants:
    X, a = state.positions, state.intensities
    lin = None if state.domain.is_disk else a @ X
    return PvsInvariants(hamiltonian(state), lin, float(a @ np.einsum("ij,ij->i", X, X)))


def _closest_pair(X: FloatArray) -> tuple[tuple[int, int], float]:
    n = X.shape[0]
    if n < 2:
        return (0, 0), math.inf
    d = X[:, None, :] - X[None, :, :]
    r = np.sqrt(np.einsum("ijk,ijk->ij", d, d))
    r[np.diag_indices(n)] = np.inf
    k = int(np.argmin(r))
    i, j = divmod(k, n)
    return (min(i, j), max(i, j)), float(r[i, j])


def step(state: PointVortexState, dt: float, t: float | None = None) -> PointVortexState:
    """One classical RK4 step of ``dX_i/dt = u_i^p(X_i)``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    X0 = state.positions
    k1 = pvs_self_velocities(state)
    pair, dist = _closest_pair(X0)
    vmax = float(np.max(np.hypot(k1[:, 0], k1[:, 1])))
    if dist <= GUARD_FACTOR * dt * vmax:
        raise CollisionImminent(
            f"vortices {pair} at distance {dist:.3e} <= {GUARD_FACTOR}*dt*max_speed", pair, dist, t)
    k2 = pvs_self_velocities(state.with_positions(X0 + 0.5 * dt * k1))
    k3 = pvs_self_velocities(state.with_positions(X0 + 0.5 * dt * k2))
    k4 = pvs_self_velocities(state.with_positions(X0 + dt * k3))
    return state.with_positions(X0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))


@dataclass(frozen=True)
class PvsSample:
    t: float
    state: PointVortexState
    invariants: PvsInvariants


@dataclass
class PvsTrajectory:
    samples: list[PvsSample] = field(default_factory=list)
    dt: float = 0.0
    stopped_at: float | None = None
    stop_reason: str | None = None

    @property
    def times(self) -> FloatArray:
        return np.array([s.t for s in self.samples])

    @property
    def positions(self) -> FloatArray:
        return np.stack([s.state.positions for s in self.samples])


def step_count(t_end: float, dt: float) -> int:
    """Number of uniform steps covering ``[0, t_end]`` with spacing at most ``dt``."""
    return int(math.ceil(t_end / dt - 1e-9)) if t_end > 0 else 0


def integrate(state: PointVortexState, t_end: float, dt: float, sample_every: int = 1) -> PvsTrajectory:
    """Integrate to ``t_end`` using ``ceil(t_end/dt)`` equal steps.

    Samples are taken every ``sample_every`` steps plus the final time. A
    collision-imminent condition ends the run early; the trajectory records the
    stopping time instead of raising.
    """
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    if sample_every < 1:
        raise ValueError("sample_every must be >= 1")
    n = step_count(t_end, dt)
    h = t_end / n if n else dt
    traj = PvsTrajectory(dt=h)
    traj.samples.append(PvsSample(0.0, state, invariants(state)))
    for k in range(1, n + 1):
        try:
            state = step(state, h, t=(k - 1) * h)
        except CollisionImminent as exc:
            traj.stopped_at = (k - 1) * h
            traj.stop_reason = str(exc)
            if traj.samples[-1].t != traj.stopped_at:
                traj.samples.append(PvsSample(traj.stopped_at, state, invariants(state)))
            return traj
        if k % sample_every == 0 or k == n:
            traj.samples.append(PvsSample(k * h if k < n else float(t_end), state, invariants(state)))
    return traj
