"""Green's functions, point-vortex velocities, relative streamfunction and intrinsic distance.

Conventions: ``G(x, y) = -(1/2pi) log|x - y| + gamma(x, y)`` with ``gamma = 0`` on
the full plane and the image term on the unit disk,

    gamma(x, y) = (1/4pi) log(|x|^2 |y|^2 - 2 x.y + 1),

which is the same as ``(1/2pi) log(|y| |x - y/|y|^2|)`` with the removable value
``gamma(x, 0) = 0``. ``perp(v) = (-v2, v1)``. All gradients are closed-form and
taken with respect to the first argument.

Point arguments broadcast: any array of shape ``(..., 2)`` is accepted and the
result has shape ``(...)`` (scalars) or ``(..., 2)`` (vectors).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import FULL_PLANE, DomainSpec
from .errors import DomainError, SingularityError

FloatArray = NDArray[np.float64]

TWO_PI = 2.0 * math.pi
#: points closer than this (relative to their size) are treated as coincident
COINCIDENCE_TOL = 1e-300
#: points may sit on the unit circle up to this slack
BOUNDARY_SLACK = 1e-14


def perp(v: ArrayLike) -> FloatArray:
    v = np.asarray(v, dtype=float)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def _as_points(x: ArrayLike) -> FloatArray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (2,):
        raise ValueError(f"points must have a trailing dimension of 2, got shape {x.shape}")
    return x


def _scalar_out(v: FloatArray):
    return float(v) if np.ndim(v) == 0 else v


def _check_disk(*pts: FloatArray) -> None:
    for p in pts:
        r2 = np.einsum("...i,...i->...", p, p)
        if np.any(r2 > (1.0 + BOUNDARY_SLACK) ** 2) or not np.all(np.isfinite(r2)):
            raise DomainError("point outside the closed unit disk")


def _image_q(x: FloatArray, y: FloatArray) -> FloatArray:
    """|x|^2|y|^2 - 2x.y + 1 = |y|^2 |x - y/|y|^2|^2 (positive for interior points)."""
    xx = np.einsum("...i,...i->...", x, x)
    yy = np.einsum("...i,...i->...", y, y)
    xy = np.einsum("...i,...i->...", x, y)
    return xx * yy - 2.0 * xy + 1.0


def gamma_reflection(domain: DomainSpec, x: ArrayLike, y: ArrayLike):
    """Boundary reflection term ``gamma(x, y)``; identically zero on the full plane."""
    x, y = _as_points(x), _as_points(y)
    if not domain.is_disk:
        return _scalar_out(np.zeros(np.broadcast_shapes(x.shape, y.shape)[:-1]))
    _check_disk(x, y)
    q = _image_q(x, y)
    if np.any(q <= 0.0):
        raise SingularityError("reflection term evaluated at a boundary point against itself")
    return _scalar_out(np.log(q) / (2.0 * TWO_PI))


def grad_gamma(domain: DomainSpec, x: ArrayLike, y: ArrayLike) -> FloatArray:
    """Gradient of ``gamma`` in its first argument."""
    x, y = _as_points(x), _as_points(y)
    if not domain.is_disk:
        return np.zeros(np.broadcast_shapes(x.shape, y.shape))
    _check_disk(x, y)
    q = _image_q(x, y)
    if np.any(q <= 0.0):
        raise SingularityError("reflection term evaluated at a boundary point against itself")
    yy = np.einsum("...i,...i->...", y, y)
    return (yy[..., None] * x - y) / (TWO_PI * q[..., None])


def _diff_r2(x: FloatArray, y: FloatArray) -> tuple[FloatArray, FloatArray]:
    d = x - y
    r2 = np.einsum("...i,...i->...", d, d)
    if np.any(r2 <= COINCIDENCE_TOL):
        raise SingularityError("Green's function evaluated at coincident points")
    return d, r2


def green(domain: DomainSpec, x: ArrayLike, y: ArrayLike):
    """``G(x, y) = -(1/2pi) log|x - y| + gamma(x, y)``."""
    x, y = _as_points(x), _as_points(y)
    _, r2 = _diff_r2(x, y)
    out = -np.log(r2) / (2.0 * TWO_PI)
    if domain.is_disk:
        out = out + gamma_reflection(domain, x, y)
    return _scalar_out(out)


def grad_green(domain: DomainSpec, x: ArrayLike, y: ArrayLike) -> FloatArray:
    """Gradient of ``G`` in its first argument."""
    x, y = _as_points(x), _as_points(y)
    d, r2 = _diff_r2(x, y)
    out = -d / (TWO_PI * r2[..., None])
    if domain.is_disk:
        out = out + grad_gamma(domain, x, y)
    return out


# ---------------------------------------------------------------------------
# point vortex system


@dataclass(frozen=True)
class PointVortexState:
    positions: FloatArray
    intensities: FloatArray
    domain: DomainSpec = FULL_PLANE

    def __post_init__(self):
        pos = np.array(self.positions, dtype=np.float64).reshape(-1, 2)
        a = np.array(self.intensities, dtype=np.float64).reshape(-1)
        if pos.shape[0] != a.size:
            raise ValueError("positions and intensities must have equal length")
        if a.size == 0:
            raise ValueError("at least one vortex is required")
        if np.any(a == 0) or not np.all(np.isfinite(a)):
            raise ValueError("intensities must be finite and nonzero")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        dom = DomainSpec.parse(self.domain)
        if dom.is_disk and np.any(np.einsum("ij,ij->i", pos, pos) >= 1.0):
            raise DomainError("point vortex outside the unit disk")
        pos.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "intensities", a)
        object.__setattr__(self, "domain", dom)

    @property
    def n(self) -> int:
        return self.intensities.size

    def with_positions(self, positions: ArrayLike) -> "PointVortexState":
        return PointVortexState(positions, self.intensities, self.domain)


def pvs_velocity(state: PointVortexState, x: ArrayLike) -> FloatArray:
    """Velocity ``u^p(x) = sum_i -a_i perp(grad_x G(x, X_i))`` of the point-vortex system."""
    x = _as_points(x)
    u = np.zeros(x.shape)
    for Xi, ai in zip(state.positions, state.intensities):
        u -= ai * perp(grad_green(state.domain, x, Xi))
    return u


def pvs_self_velocity(state: PointVortexState, i: int) -> FloatArray:
    """Velocity of vortex ``i``: its image self-interaction plus all other vortices."""
    Xi = state.positions[i]
    u = -state.intensities[i] * perp(grad_gamma(state.domain, Xi, Xi))
    for j in range(state.n):
        if j != i:
            u = u - state.intensities[j] * perp(grad_green(state.domain, Xi, state.positions[j]))
    return np.asarray(u, dtype=float)


def pvs_self_velocities(state: PointVortexState) -> FloatArray:
    """All ``u_i^p(X_i)`` at once, shape (n, 2)."""
    X = state.positions
    a = state.intensities
    n = state.n
    d = X[:, None, :] - X[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", d, d)
    np.fill_diagonal(r2, np.inf)
    if np.any(r2 <= COINCIDENCE_TOL):
        i, j = np.unravel_index(np.argmin(r2), r2.shape)
        raise SingularityError(f"coincident vortices {i} and {j}")
    grad = -d / (TWO_PI * r2[..., None])
    if state.domain.is_disk:
        grad = grad + grad_gamma(state.domain, X[:, None, :], X[None, :, :])
        diag = grad_gamma(state.domain, X, X)
    else:
        diag = np.zeros((n, 2))
    grad[np.arange(n), np.arange(n)] = diag
    return -perp(np.einsum("j,ijk->ik", a, grad))


def _taylor_remainders(state: PointVortexState, i: int, x: FloatArray):
    """Pieces of the regular part of the relative streamfunction.

    Returns ``(R, gradR)`` where
    ``Psi_i(x) = -(a_i/2pi) log|x - X_i| + R(x)``, i.e. ``R`` collects
    ``a_i (gamma(x,X_i) - gamma(X_i,X_i) - grad gamma(X_i,X_i).(x - X_i))`` and the
    first-order Taylor remainders of ``G(., X_j)`` at ``X_i`` for ``j != i``.
    """
    dom = state.domain
    Xi = state.positions[i]
    ai = state.intensities[i]
    dx = x - Xi
    R = np.zeros(x.shape[:-1])
    gR = np.zeros(x.shape)
    if dom.is_disk:
        g0 = gamma_reflection(dom, Xi, Xi)
        dg0 = grad_gamma(dom, Xi, Xi)
        R += ai * (gamma_reflection(dom, x, Xi) - g0 - dx @ dg0)
        gR += ai * (grad_gamma(dom, x, Xi) - dg0)
    for j in range(state.n):
        if j == i:
            continue
        Xj = state.positions[j]
        aj = state.intensities[j]
        G0 = green(dom, Xi, Xj)
        dG0 = grad_green(dom, Xi, Xj)
        R += aj * (green(dom, x, Xj) - G0 - dx @ dG0)
        gR += aj * (grad_green(dom, x, Xj) - dG0)
    return R, gR


def relative_streamfunction(state: PointVortexState, i: int, x: ArrayLike):
    """``Psi_i(x)``: streamfunction of ``u^p - u_i^p(X_i)`` normalized at ``X_i``."""
    x = _as_points(x)
    if state.domain.is_disk:
        _check_disk(x)
    _, r2 = _diff_r2(x, state.positions[i])
    R, _ = _taylor_remainders(state, i, x)
    return _scalar_out(-state.intensities[i] * np.log(r2) / (2.0 * TWO_PI) + R)


def grad_relative_streamfunction(state: PointVortexState, i: int, x: ArrayLike) -> FloatArray:
    x = _as_points(x)
    d, r2 = _diff_r2(x, state.positions[i])
    _, gR = _taylor_remainders(state, i, x)
    return -state.intensities[i] * d / (TWO_PI * r2[..., None]) + gR


def _log_factor(state: PointVortexState, i: int, x: FloatArray):
    """``g`` and ``grad g`` with ``d_i(x) = |x - X_i| exp(g(x))``."""
    R, gR = _taylor_remainders(state, i, x)
    c = -TWO_PI / state.intensities[i]
    return c * R, c * gR


def intrinsic_distance(state: PointVortexState, i: int, x: ArrayLike):
    """``d_i(x) = exp(-2pi Psi_i(x) / a_i)``, equal to ``|x - X_i| exp(g(x))``; 0 at ``X_i``."""
    x = _as_points(x)
    if state.domain.is_disk:
        _check_disk(x)
    d = x - state.positions[i]
    r = np.sqrt(np.einsum("...i,...i->...", d, d))
    # g is regular at X_i, so d_i(X_i) = 0 comes out of the product directly
    g, _ = _log_factor(state, i, x)
    return _scalar_out(r * np.exp(g))


def grad_intrinsic_distance(state: PointVortexState, i: int, x: ArrayLike) -> FloatArray:
    """Closed-form gradient ``d_i (x - X_i)/|x - X_i|^2 + d_i grad g``."""
    x = _as_points(x)
    d, r2 = _diff_r2(x, state.positions[i])
    g, gg = _log_factor(state, i, x)
    dist = np.sqrt(r2) * np.exp(g)
    return dist[..., None] * (d / r2[..., None] + gg)


def hamiltonian(state: PointVortexState) -> float:
    """``sum_{i<j} a_i a_j G(X_i,X_j) + 1/2 sum_i a_i^2 gamma(X_i,X_i)``."""
    X, a = state.positions, state.intensities
    H = 0.0
    for i in range(state.n):
        if state.domain.is_disk:
            H += 0.5 * a[i] ** 2 * gamma_reflection(state.domain, X[i], X[i])
        for j in range(i + 1, state.n):
            H += a[i] * a[j] * green(state.domain, X[i], X[j])
    return float(H)
