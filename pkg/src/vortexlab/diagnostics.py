"""Measurements on a running vortex-patch simulation.

Patch centres, cutoff-weighted moments of the intrinsic distance, the spread,
the energy defect and its point-vortex surrogate, the mismatch between the
centres' velocity and the point-vortex velocity, and conserved quantities.
Everything here is read-only over a particle field.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.spatial
from numpy.typing import ArrayLike, NDArray

from . import energy
from .core import FULL_PLANE, DomainSpec, ParticleField, deposit_auto
from .errors import ValidationError
from .greens import PointVortexState, intrinsic_distance, pvs_self_velocities
from .pvs import step as pvs_step

FloatArray = NDArray[np.float64]

#: inner and outer edge of the cutoff band, in units of N1 * epsilon
CUTOFF_INNER = 40.0
CUTOFF_OUTER = 80.0


def centers(field_: ParticleField, n_patches: int | None = None) -> FloatArray:
    """X_i = (1/a_i) sum_{label(p) = i} Gamma_p x_p, shape (n, 2)."""
    n = field_.n_patches if n_patches is None else n_patches
    a = np.bincount(field_.labels, weights=field_.circulations, minlength=n)
    if np.any(a == 0):
        bad = [int(i) for i in np.flatnonzero(a == 0)]
        raise ValidationError(f"patches {bad} have zero circulation",
                              [f"patch {i} has zero circulation" for i in bad])
    cx = np.bincount(field_.labels, weights=field_.circulations * field_.positions[:, 0], minlength=n)
    cy = np.bincount(field_.labels, weights=field_.circulations * field_.positions[:, 1], minlength=n)
    return np.column_stack([cx / a, cy / a])


def intensities(field_: ParticleField, n_patches: int | None = None) -> FloatArray:
    n = field_.n_patches if n_patches is None else n_patches
    return np.bincount(field_.labels, weights=field_.circulations, minlength=n)


def point_vortex_state(field_: ParticleField, domain: DomainSpec = FULL_PLANE) -> PointVortexState:
    return PointVortexState(centers(field_), intensities(field_), domain)


def cutoff_eta(r: ArrayLike, epsilon: float, n1: float = 1.0):
    """Smooth cutoff: 0 below 40 N1 eps, 1 above 80 N1 eps, quintic smoothstep between."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("r must be nonnegative")
    a = CUTOFF_INNER * n1 * epsilon
    s = np.clip((r - a) / ((CUTOFF_OUTER - CUTOFF_INNER) * n1 * epsilon), 0.0, 1.0)
    out = s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
    return float(out) if out.ndim == 0 else out


def default_moment_orders(epsilon: float) -> list[float]:
    ks = [1.0, 2.0, 3.0, 4.0]
    top = float(math.ceil(abs(math.log(epsilon))))
    if top not in ks:
        ks.append(top)
    return ks


def particle_distances(field_: ParticleField, state: PointVortexState) -> FloatArray:
    """d_i(x_p) with i = label(p), one value per particle."""
    out = np.empty(len(field_))
    for i in range(state.n):
        m = field_.labels == i
        if np.any(m):
            out[m] = intrinsic_distance(state, i, field_.positions[m])
    return out


def moments(field_: ParticleField, state: PointVortexState, ks: Sequence[float], epsilon: float,
            n1: float = 1.0, distances: FloatArray | None = None) -> dict[float, float]:
    """M_k = sum_p |Gamma_p| eta_eps(d_i(x_p)) d_i(x_p)^k (k >= 1, may be fractional)."""
    if any(k < 1 for k in ks):
        raise ValueError("moment orders must be >= 1")
    d = particle_distances(field_, state) if distances is None else distances
    w = np.abs(field_.circulations) * cutoff_eta(d, epsilon, n1)
    return {float(k): float(np.sum(w * d**k)) for k in ks}


def spread(field_: ParticleField, state: PointVortexState, epsilon: float, n1: float = 1.0,
           distances: FloatArray | None = None) -> float:
    """S = max(40 N1 eps, max_p d_label(p)(x_p))."""
    d = particle_distances(field_, state) if distances is None else distances
    return max(CUTOFF_INNER * n1 * epsilon, float(np.max(d)) if d.size else 0.0)


def support_diameters(field_: ParticleField, n_patches: int | None = None) -> FloatArray:
    """Largest distance between two particles of the same patch."""
    n = field_.n_patches if n_patches is None else n_patches
    out = np.zeros(n)
    for i in range(n):
        pts = field_.positions[field_.labels == i]
        if pts.shape[0] < 2:
            continue
        if pts.shape[0] > 3:
            try:
                pts = pts[scipy.spatial.ConvexHull(pts).vertices]
            except scipy.spatial.QhullError:
                pass  # degenerate (collinear) sets: fall back to all points
        out[i] = float(np.max(scipy.spatial.distance.pdist(pts)))
    return out


# ---------------------------------------------------------------------------
# centre velocities


def _rotation_time(state: PointVortexState) -> float:
    """2 pi L^2 / sum|a| with L the smallest pair or wall distance (inf when nothing moves)."""
    X = state.positions
    lengths = []
    if state.n > 1:
        lengths.append(float(np.min(scipy.spatial.distance.pdist(X))))
    if state.domain.is_disk:
        lengths.append(float(np.min(1.0 - np.hypot(X[:, 0], X[:, 1]))))
    if not lengths:
        return math.inf
    return 2.0 * math.pi * min(lengths) ** 2 / float(np.sum(np.abs(state.intensities)))


def pvs_third_derivative(state: PointVortexState) -> FloatArray:
    """d^3 X_i / dt^3 along the point-vortex flow (five-point stencil on RK4 steps)."""
    tau = _rotation_time(state)
    if not math.isfinite(tau):
        return np.zeros((state.n, 2))
    dt = 0.01 * tau
    fwd1 = pvs_step(state, dt)
    fwd2 = pvs_step(fwd1, dt)
    # flipping every intensity reverses time
    rev = PointVortexState(state.positions, -state.intensities, state.domain)
    bwd1 = pvs_step(rev, dt)
    bwd2 = pvs_step(bwd1, dt)
    return (fwd2.positions - 2.0 * fwd1.positions + 2.0 * bwd1.positions - bwd2.positions) / (2.0 * dt**3)


@dataclass(frozen=True)
class VelocityResidual:
    """Per-patch |dX_i/dt - u_i^p(X_i)|.

    ``finite_difference`` differentiates the centre history (central when the
    sample has neighbours on both sides, otherwise the second-order one-sided
    stencil); ``error_estimate`` is the O(dt^2) truncation error of that
    stencil evaluated with the point-vortex third derivative.
    ``averaged`` uses dX_i/dt = (1/a_i) sum Gamma_p u(x_p), which holds exactly
    for the particle system and carries no differentiation error.
    """

    finite_difference: FloatArray
    error_estimate: FloatArray
    averaged: FloatArray | None


def velocity_residual(window: ArrayLike, window_index: int, dt: float, state: PointVortexState,
                      field_: ParticleField | None = None, velocities: FloatArray | None = None) -> VelocityResidual:
    """Residuals at sample ``window[window_index]``; ``state`` holds the centres at that sample."""
    W = np.asarray(window, dtype=float)
    if W.ndim != 3 or W.shape[0] < 3:
        raise ValueError("velocity residual needs three consecutive centre samples")
    if not dt > 0:
        raise ValueError("dt must be positive")
    if window_index == 1:
        dX = (W[2] - W[0]) / (2.0 * dt)
        coef = 1.0 / 6.0
    elif window_index == 0:
        dX = (-3.0 * W[0] + 4.0 * W[1] - W[2]) / (2.0 * dt)
        coef = 1.0 / 3.0
    elif window_index == 2:
        dX = (3.0 * W[2] - 4.0 * W[1] + W[0]) / (2.0 * dt)
        coef = 1.0 / 3.0
    else:
        raise ValueError("window_index must be 0, 1 or 2")
    up = pvs_self_velocities(state)
    fd = np.hypot(*(dX - up).T)
    err = coef * dt * dt * np.hypot(*pvs_third_derivative(state).T)
    avg = None
    if field_ is not None and velocities is not None:
        n = state.n
        a = intensities(field_, n)
        g = field_.circulations
        mx = np.bincount(field_.labels, weights=g * velocities[:, 0], minlength=n) / a
        my = np.bincount(field_.labels, weights=g * velocities[:, 1], minlength=n) / a
        avg = np.hypot(mx - up[:, 0], my - up[:, 1])
    return VelocityResidual(fd, err, avg)


# ---------------------------------------------------------------------------
# conserved quantities


@dataclass(frozen=True)
class Conservation:
    circulation: float
    angular_momentum: float
    linear_impulse: tuple[float, float] | None
    pv_energy: float
    total_energy: float


def pv_log_energy(X: ArrayLike, a: ArrayLike) -> float:
    """sum_{i != j} a_i a_j log|X_i - X_j|."""
    X = np.asarray(X, dtype=float).reshape(-1, 2)
    a = np.asarray(a, dtype=float)
    if X.shape[0] < 2:
        return 0.0
    d = scipy.spatial.distance.squareform(scipy.spatial.distance.pdist(X))
    np.fill_diagonal(d, 1.0)
    return float(a @ np.log(d) @ a)


def conservation(field_: ParticleField, domain: DomainSpec = FULL_PLANE, delta: float | None = None,
                 with_energy: bool = True) -> Conservation:
    g = field_.circulations
    x = field_.positions
    ang = float(np.sum(g * np.einsum("ij,ij->i", x, x)))
    imp = None if domain.is_disk else (float(np.sum(g * x[:, 0])), float(np.sum(g * x[:, 1])))
    pv = pv_log_energy(centers(field_), intensities(field_))
    d = field_.blob_radius if delta is None else delta
    tot = energy.particle_energy(field_, d, domain) if with_energy else math.nan
    return Conservation(float(np.sum(g)), ang, imp, pv, tot)


# ---------------------------------------------------------------------------
# energy defect on deposited grids


@dataclass(frozen=True)
class DefectMeasurement:
    defect: float
    quadrature_bound: float
    surrogate: float
    per_patch: tuple[float, ...]
    spacing: float


def measure_defect(field_: ParticleField, domain: DomainSpec = FULL_PLANE, spacing: float | None = None,
                   X: FloatArray | None = None) -> DefectMeasurement:
    """Sum over patches of E(|omega_i|*) - E(|omega_i|) on CIC-deposited grids, plus the surrogate.

    Grids use ``spacing`` (default: half the blob radius, i.e. the particle
    lattice spacing). Deposited values are taken in absolute value so that
    negative patches are handled like positive ones (the energy is quadratic).
    The surrogate reuses the grid self energies and rearranged energies so
    that their quadrature errors cancel.
    """
    h = 0.5 * field_.blob_radius if spacing is None else spacing
    n = field_.n_patches
    per, bounds, e_star, e_self = [], [], [], []
    for i in range(n):
        grid = deposit_auto(field_, i, h)
        grid = type(grid)(grid.origin, grid.spacing, np.abs(grid.values))
        rep = energy.defect(grid)
        per.append(rep.defect)
        bounds.append(rep.quadrature_error_bound)
        e_star.append(rep.energy_rearranged)
        e_self.append(rep.energy)
    Xc = centers(field_, n) if X is None else X
    sur = energy.surrogate_defect(field_, Xc, e_star, domain, self_energies=e_self)
    return DefectMeasurement(float(np.sum(per)), float(np.sum(bounds)), float(sur), tuple(per), h)


# ---------------------------------------------------------------------------
# samples and CSV output


@dataclass(frozen=True)
class DiagnosticsSample:
    t: float
    step: int
    centers: FloatArray
    diam: FloatArray
    m_k: dict[float, float]
    spread: float
    defect: float
    defect_bound: float
    surrogate: float
    velocity_residual: FloatArray
    residual_error: FloatArray
    residual_averaged: FloatArray
    circulation: float
    angular_momentum: float
    impulse: tuple[float, float] | None
    pv_energy: float
    total_energy: float
    extra: dict = field(default_factory=dict)


def csv_columns(n_patches: int, ks: Sequence[float]) -> list[str]:
    cols = ["step", "t"]
    for i in range(n_patches):
        cols += [f"x_{i}", f"y_{i}", f"diam_{i}"]
    cols += [f"M_{_k_label(k)}" for k in ks]
    cols += ["spread", "defect", "defect_bound", "surrogate"]
    for i in range(n_patches):
        cols += [f"residual_{i}", f"residual_err_{i}", f"residual_avg_{i}"]
    cols += ["circulation", "angular_momentum", "impulse_x", "impulse_y", "pv_energy", "total_energy"]
    return cols


def _k_label(k: float) -> str:
    return str(int(k)) if float(k).is_integer() else repr(float(k))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def sample_row(s: DiagnosticsSample, ks: Sequence[float]) -> list[str]:
    row = [_fmt(s.step), _fmt(s.t)]
    for i in range(s.centers.shape[0]):
        row += [_fmt(s.centers[i, 0]), _fmt(s.centers[i, 1]), _fmt(s.diam[i])]
    row += [_fmt(s.m_k.get(float(k))) for k in ks]
    row += [_fmt(s.spread), _fmt(s.defect), _fmt(s.defect_bound), _fmt(s.surrogate)]
    for i in range(s.centers.shape[0]):
        row += [_fmt(s.velocity_residual[i]), _fmt(s.residual_error[i]), _fmt(s.residual_averaged[i])]
    imp = s.impulse if s.impulse is not None else (None, None)
    row += [_fmt(s.circulation), _fmt(s.angular_momentum), _fmt(imp[0]), _fmt(imp[1]), _fmt(s.pv_energy),
            _fmt(s.total_energy)]
    return row


class CsvSink:
    """Writes one row per sample to an open text stream with a fixed header."""

    def __init__(self, stream: io.TextIOBase, n_patches: int, ks: Sequence[float]):
        self.ks = [float(k) for k in ks]
        self.writer = csv.writer(stream, lineterminator="\n")
        self.writer.writerow(csv_columns(n_patches, self.ks))
        self.stream = stream

    def write(self, s: DiagnosticsSample) -> None:
        self.writer.writerow(sample_row(s, self.ks))
        self.stream.flush()
